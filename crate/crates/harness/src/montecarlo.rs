//! Tail probabilities of a squared standard normal and of the product of two
//! independent standard normals.

use quadenhance_core::CounterRng;
use statrs::function::erf::erfc;

/// Samples per RNG stream; stream `j` covers samples `[j * CHUNK, (j+1) * CHUNK)`.
pub const CHUNK: u64 = 1 << 16;

/// Hit counts for every threshold over the same sample pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TailCounts {
    pub samples: u64,
    pub square: Vec<u64>,
    pub cross: Vec<u64>,
}

/// Counts `x1² > v` and `|x1 x2| > v` over `samples` standard-normal pairs.
pub fn count_tails(thresholds: &[f64], samples: u64, seed: u64) -> TailCounts {
    let root = CounterRng::new(seed);
    let mut square = vec![0u64; thresholds.len()];
    let mut cross = vec![0u64; thresholds.len()];
    let mut done = 0u64;
    let mut stream = 0u64;
    while done < samples {
        let take = CHUNK.min(samples - done);
        let mut rng = root.split(stream);
        for _ in 0..take {
            let (x1, x2) = rng.normal_pair();
            let (sq, pr) = (x1 * x1, (x1 * x2).abs());
            for (k, &v) in thresholds.iter().enumerate() {
                square[k] += u64::from(sq > v);
                cross[k] += u64::from(pr > v);
            }
        }
        done += take;
        stream += 1;
    }
    TailCounts {
        samples,
        square,
        cross,
    }
}

/// Estimate and binomial standard error `sqrt(p (1 - p) / N)`.
pub fn proportion(hits: u64, samples: u64) -> (f64, f64) {
    let p = hits as f64 / samples as f64;
    (p, (p * (1.0 - p) / samples as f64).sqrt())
}

/// Upper tail of the standard normal.
pub fn normal_sf(t: f64) -> f64 {
    0.5 * erfc(t / std::f64::consts::SQRT_2)
}

/// `p(x² > v) = 2 (1 - Φ(√v))`.
pub fn square_tail(v: f64) -> f64 {
    2.0 * normal_sf(v.sqrt())
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

fn adaptive<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    (fa, fm, fb): (f64, f64, f64),
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (f(0.5 * (a + m)), f(0.5 * (m + b)));
    let left = simpson(a, m, fa, lm, fm);
    let right = simpson(m, b, fm, rm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, m, (fa, lm, fm), left, 0.5 * tol, depth - 1)
        + adaptive(f, m, b, (fm, rm, fb), right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = simpson(a, b, fa, fm, fb);
    adaptive(&f, a, b, (fa, fm, fb), whole, tol, 48)
}

fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `p(|x1 x2| > v) = 4 ∫_0^∞ φ(x) Q(v / x) dx`, with `Q` the normal upper
/// tail. The integrand peaks near `x = √v` and is negligible beyond 40.
pub fn cross_tail(v: f64) -> f64 {
    if v <= 0.0 {
        return 1.0;
    }
    let f = |x: f64| {
        if x <= 0.0 {
            0.0
        } else {
            phi(x) * normal_sf(v / x)
        }
    };
    let peak = v.sqrt();
    // Splitting at the peak keeps the narrow bump from being skipped. The
    // tail decays like exp(-v), which sets the absolute tolerance.
    let tol = 1e-12 * (-v).exp();
    4.0 * (integrate(f, 0.0, peak, tol) + integrate(f, peak, 40.0_f64.max(4.0 * peak), tol))
}

/// `K_0(z) = ∫_0^∞ exp(-z cosh t) dt`.
pub fn bessel_k0(z: f64) -> f64 {
    let upper = (2.0 * (750.0 / z).max(2.0)).ln() + 1.0;
    integrate(|t| (-z * t.cosh()).exp(), 0.0, upper, 1e-14 * (-z).exp())
}

/// Same tail through the product density `K_0(|z|) / π`:
/// `p(|x1 x2| > v) = (2/π) ∫_v^∞ K_0(z) dz`. Independent of [`cross_tail`].
pub fn cross_tail_bessel(v: f64) -> f64 {
    let tol = 1e-12 * (-v).exp();
    2.0 / std::f64::consts::PI * integrate(bessel_k0, v, v + 60.0, tol)
}
