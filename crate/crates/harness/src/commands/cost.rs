use std::io::Write;

use quadenhance_core::cost::{count_model, preset_dim192, preset_vit_m_like, CostReport};
use quadenhance_core::models::Mlp;

use crate::config::CostConfig;
use crate::error::{HarnessError, Result};
use crate::output;

pub fn report(cfg: &CostConfig) -> Result<CostReport> {
    match (&cfg.preset, &cfg.dims) {
        (Some(_), Some(_)) => Err(HarnessError::config(
            "give either a preset or dims, not both",
        )),
        (Some(name), None) => match name.as_str() {
            "dim192" => Ok(preset_dim192()),
            "vit-m-like" => Ok(preset_vit_m_like(cfg.k)),
            other => Err(HarnessError::config(format!(
                "unknown preset {other:?}; expected \"dim192\" or \"vit-m-like\""
            ))),
        },
        (None, Some(dims)) => {
            if dims.len() < 2 {
                return Err(HarnessError::config(
                    "dims needs at least an input and an output width",
                ));
            }
            let mut model_cfg = cfg.model.clone();
            model_cfg.hidden = dims[1..dims.len() - 1].to_vec();
            let mlp = model_cfg.to_mlp(dims[0], dims[dims.len() - 1], 0)?;
            Ok(count_model(&Mlp::<f64>::init(&mlp)?))
        }
        (None, None) => Ok(preset_dim192()),
    }
}

pub fn run(cfg: &CostConfig, out: &mut dyn Write) -> Result<bool> {
    let report = report(cfg)?;
    let out_dir = output::prepare(cfg.out.as_deref())?;
    let _ = writeln!(out, "{report}");
    output::write_text(&out_dir.join("cost.csv"), &report.to_csv())?;
    Ok(true)
}
