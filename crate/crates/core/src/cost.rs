//! Closed-form parameter and FLOP accounting.
//!
//! Conventions: a multiply-add is 2 FLOPs, the bias add costs `d`. For an
//! `n -> d` layer with `k` shifts:
//!
//! * linear: `n*d + d` parameters, `2*n*d + d` FLOPs
//! * enhancer: `k*d` parameters, `2*k*d` (Λỹ) `+ d` (⊙ỹ) `+ d` (+ỹ) FLOPs

use std::fmt;

use num_rational::Ratio;

use crate::models::{Layer, Mlp, Parameterized};
use crate::quadenhancer::QeLayer;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostKind {
    Linear,
    Qe,
    QuadraNet,
    SwiGlu,
}

impl CostKind {
    pub fn name(self) -> &'static str {
        match self {
            CostKind::Linear => "linear",
            CostKind::Qe => "qe",
            CostKind::QuadraNet => "quadranet",
            CostKind::SwiGlu => "swiglu",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerCost {
    pub name: String,
    pub kind: CostKind,
    pub n: u64,
    pub d: u64,
    pub k: u64,
    pub params_linear: u64,
    pub params_enhancer: u64,
    pub flops_linear: u64,
    pub flops_enhancer: u64,
}

impl LayerCost {
    /// Linear or enhanced layer from its dimensions (`k = 0`: plain).
    pub fn from_dims(name: impl Into<String>, n: u64, d: u64, k: u64) -> Self {
        Self {
            name: name.into(),
            kind: if k == 0 {
                CostKind::Linear
            } else {
                CostKind::Qe
            },
            n,
            d,
            k,
            params_linear: n * d + d,
            params_enhancer: k * d,
            flops_linear: 2 * n * d + d,
            flops_enhancer: if k == 0 { 0 } else { 2 * (k + 1) * d },
        }
    }

    /// Enhancer parameters relative to the weight matrix alone, `kd / nd`.
    pub fn param_ratio(&self) -> Ratio<u64> {
        Ratio::new(self.params_enhancer, self.n * self.d)
    }

    /// Enhancer parameters relative to weight plus bias, `kd / (nd + d)`.
    pub fn param_ratio_with_bias(&self) -> Ratio<u64> {
        Ratio::new(self.params_enhancer, self.params_linear)
    }

    /// `2(k+1)d / (2nd + d)`.
    pub fn flop_ratio(&self) -> Ratio<u64> {
        Ratio::new(self.flops_enhancer, self.flops_linear)
    }
}

/// Cost row of an enhanced layer. Panics if the closed forms disagree with
/// the number of scalars the layer actually stores.
pub fn count_layer<T: Scalar>(name: impl Into<String>, layer: &QeLayer<T>) -> LayerCost {
    let row = LayerCost::from_dims(name, layer.n() as u64, layer.d() as u64, layer.k() as u64);
    let stored = layer.enumerate_params() as u64;
    assert_eq!(
        row.params_linear + row.params_enhancer,
        stored,
        "closed-form parameter count disagrees with stored scalars"
    );
    row
}

fn count_baseline(name: String, kind: CostKind, n: u64, d: u64, params: u64) -> LayerCost {
    // QuadraNet: three projections, one product, one add, optional bias.
    // SwiGLU: two projections, sigmoid (1 per element), two products.
    let flops = match kind {
        CostKind::QuadraNet => 3 * 2 * n * d + 2 * d + (params - 3 * n * d),
        CostKind::SwiGlu => 2 * 2 * n * d + 3 * d,
        _ => unreachable!("only quadratic baselines"),
    };
    LayerCost {
        name,
        kind,
        n,
        d,
        k: 0,
        params_linear: params,
        params_enhancer: 0,
        flops_linear: flops,
        flops_enhancer: 0,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostReport {
    pub rows: Vec<LayerCost>,
}

impl CostReport {
    pub fn new(rows: Vec<LayerCost>) -> Self {
        Self { rows }
    }

    pub fn total_params_linear(&self) -> u64 {
        self.rows.iter().map(|r| r.params_linear).sum()
    }

    pub fn total_params_enhancer(&self) -> u64 {
        self.rows.iter().map(|r| r.params_enhancer).sum()
    }

    pub fn total_flops_linear(&self) -> u64 {
        self.rows.iter().map(|r| r.flops_linear).sum()
    }

    pub fn total_flops_enhancer(&self) -> u64 {
        self.rows.iter().map(|r| r.flops_enhancer).sum()
    }

    pub fn total_weight_params(&self) -> u64 {
        self.rows.iter().map(|r| r.n * r.d).sum()
    }

    pub fn param_ratio(&self) -> Ratio<u64> {
        Ratio::new(
            self.total_params_enhancer(),
            self.total_weight_params().max(1),
        )
    }

    pub fn flop_ratio(&self) -> Ratio<u64> {
        Ratio::new(
            self.total_flops_enhancer(),
            self.total_flops_linear().max(1),
        )
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "name,kind,n,d,k,params_linear,params_enhancer,flops_linear,flops_enhancer,param_ratio,flop_ratio\n",
        );
        let mut push = |name: &str,
                        kind: &str,
                        n: String,
                        d: String,
                        k: String,
                        pl: u64,
                        pe: u64,
                        fl: u64,
                        fe: u64,
                        pr: Ratio<u64>,
                        fr: Ratio<u64>| {
            out.push_str(&format!(
                "{name},{kind},{n},{d},{k},{pl},{pe},{fl},{fe},{},{}\n",
                fmt_ratio(pr),
                fmt_ratio(fr)
            ));
        };
        for r in &self.rows {
            push(
                &r.name,
                r.kind.name(),
                r.n.to_string(),
                r.d.to_string(),
                r.k.to_string(),
                r.params_linear,
                r.params_enhancer,
                r.flops_linear,
                r.flops_enhancer,
                r.param_ratio(),
                r.flop_ratio(),
            );
        }
        push(
            "total",
            "",
            String::new(),
            String::new(),
            String::new(),
            self.total_params_linear(),
            self.total_params_enhancer(),
            self.total_flops_linear(),
            self.total_flops_enhancer(),
            self.param_ratio(),
            self.flop_ratio(),
        );
        out
    }
}

fn fmt_ratio(r: Ratio<u64>) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

fn pct(r: Ratio<u64>) -> f64 {
    100.0 * *r.numer() as f64 / *r.denom() as f64
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<16} {:>9} {:>6} {:>6} {:>3} {:>13} {:>10} {:>13} {:>10} {:>9} {:>9}",
            "layer",
            "kind",
            "n",
            "d",
            "k",
            "params(lin)",
            "params(QE)",
            "flops(lin)",
            "flops(QE)",
            "param %",
            "flop %"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<16} {:>9} {:>6} {:>6} {:>3} {:>13} {:>10} {:>13} {:>10} {:>8.3}% {:>8.3}%",
                r.name,
                r.kind.name(),
                r.n,
                r.d,
                r.k,
                r.params_linear,
                r.params_enhancer,
                r.flops_linear,
                r.flops_enhancer,
                pct(r.param_ratio()),
                pct(r.flop_ratio())
            )?;
        }
        writeln!(
            f,
            "{:<16} {:>9} {:>6} {:>6} {:>3} {:>13} {:>10} {:>13} {:>10} {:>8.3}% {:>8.3}%",
            "total",
            "",
            "",
            "",
            "",
            self.total_params_linear(),
            self.total_params_enhancer(),
            self.total_flops_linear(),
            self.total_flops_enhancer(),
            pct(self.param_ratio()),
            pct(self.flop_ratio())
        )?;
        write!(
            f,
            "note: params(lin) includes the bias (n*d + d); param % is k*d / (n*d), relative to W alone."
        )
    }
}

/// Per-layer report for a model; checks that the enhancer total equals the
/// model's stored parameters minus its weights and biases.
pub fn count_model<T: Scalar>(model: &Mlp<T>) -> CostReport {
    let mut rows = Vec::with_capacity(model.layers().len());
    let mut linear_stored = 0u64;
    for (i, layer) in model.layers().iter().enumerate() {
        let name = format!("layers.{i}");
        let (n, d) = (layer.n() as u64, layer.d() as u64);
        match layer {
            Layer::Qe(l) => {
                linear_stored += (l.weight().len() + l.bias().len()) as u64;
                rows.push(count_layer(name, l));
            }
            Layer::QuadraNet(l) => {
                let p: usize = l.parameters().iter().map(|(_, t)| t.len()).sum();
                linear_stored += p as u64;
                rows.push(count_baseline(name, CostKind::QuadraNet, n, d, p as u64));
            }
            Layer::SwiGlu(l) => {
                let p: usize = l.parameters().iter().map(|(_, t)| t.len()).sum();
                linear_stored += p as u64;
                rows.push(count_baseline(name, CostKind::SwiGlu, n, d, p as u64));
            }
        }
    }
    let report = CostReport::new(rows);
    assert_eq!(
        report.total_params_enhancer(),
        model.num_parameters() as u64 - linear_stored,
        "enhancer parameter total disagrees with enumeration"
    );
    report
}

/// The single `192 -> 192`, `k = 1` layer used as the worked example.
pub fn preset_dim192() -> CostReport {
    CostReport::new(vec![LayerCost::from_dims("linear192", 192, 192, 1)])
}

/// Linear layers of a 6-block transformer with embedding 192 and FFN 768:
/// qkv, attention output, and the two FFN projections per block.
pub fn preset_vit_m_like(k: u64) -> CostReport {
    let mut rows = Vec::new();
    for block in 0..6 {
        for (part, n, d) in [
            ("qkv", 192, 576),
            ("proj", 192, 192),
            ("fc1", 192, 768),
            ("fc2", 768, 192),
        ] {
            rows.push(LayerCost::from_dims(
                format!("block{block}.{part}"),
                n,
                d,
                k,
            ));
        }
    }
    CostReport::new(rows)
}
