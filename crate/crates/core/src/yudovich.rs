//! Yudovich-type uniqueness diagnostics.
//!
//! For a growth function `θ` the modulus
//!
//! ```text
//! Φ_θ(r) = inf_{0<ε<1/2} (2/ε) θ(2/ε) r^{ε/2}   (r ≥ 1; no r factor for r < 1)
//! ```
//!
//! decides uniqueness through the Osgood condition
//! `∫₀¹ dr / (r Φ_θ(1/r)) = ∞`. With `p = 2/ε` and `L = ln r` the quantity
//! under the infimum is `exp(ln p + ln θ(p) + L/p)`, and for large `L` the
//! minimiser sits at `p ≈ L`. All computations are therefore carried out on
//! `ln p` and `ln L`, which keeps arguments like `r = exp(exp(200))` in range.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HmError, Result};
use crate::quadrature::{gauss_legendre, SampledField};

const EPS_MAX: f64 = 0.5 - 1e-6;
const SCAN_POINTS: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GrowthFunction {
    /// `θ ≡ c`.
    Constant { c: f64 },
    /// `θ(p) = ln(1 + p)`.
    Log,
    /// `θ(p) = p^β`.
    Power { beta: f64 },
    /// Piecewise-linear interpolation of `(p, θ)` pairs, flat outside.
    Table { p: Vec<f64>, theta: Vec<f64> },
}

impl GrowthFunction {
    pub fn constant() -> Self {
        GrowthFunction::Constant { c: 1.0 }
    }

    pub fn power(beta: f64) -> Self {
        GrowthFunction::Power { beta }
    }

    /// Parses `const`, `log`, `power:β` or `table:FILE` (two columns `p θ`,
    /// whitespace or comma separated, `#` comments).
    pub fn parse(spec: &str) -> Result<Self> {
        let g = match spec {
            "const" | "constant" => GrowthFunction::constant(),
            "log" => GrowthFunction::Log,
            _ => {
                if let Some(b) = spec.strip_prefix("power:") {
                    let beta = b
                        .parse()
                        .map_err(|_| HmError::Usage(format!("bad exponent in '{spec}'")))?;
                    GrowthFunction::power(beta)
                } else if let Some(file) = spec.strip_prefix("table:") {
                    Self::read_table(Path::new(file))?
                } else {
                    return Err(HmError::Usage(format!(
                        "unknown growth function '{spec}' (expected const, log, power:B or table:FILE)"
                    )));
                }
            }
        };
        g.validate()?;
        Ok(g)
    }

    fn read_table(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HmError::io(path, e))?;
        let mut p = Vec::new();
        let mut theta = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            let parse = |s: &str| -> Result<f64> {
                s.parse().map_err(|_| HmError::Format {
                    path: path.to_path_buf(),
                    reason: format!("line {}: '{s}' is not a number", k + 1),
                })
            };
            if cols.len() != 2 {
                return Err(HmError::Format {
                    path: path.to_path_buf(),
                    reason: format!("line {}: expected two columns", k + 1),
                });
            }
            p.push(parse(cols[0])?);
            theta.push(parse(cols[1])?);
        }
        Ok(GrowthFunction::Table { p, theta })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GrowthFunction::Constant { c } if !(*c > 0.0 && c.is_finite()) => {
                Err(HmError::Usage(format!("constant growth must be positive, got {c}")))
            }
            GrowthFunction::Power { beta } if !(*beta >= 0.0 && beta.is_finite()) => Err(HmError::Usage(format!(
                "power growth exponent must be non-negative, got {beta}"
            ))),
            GrowthFunction::Table { p, theta } => {
                if p.is_empty() || p.len() != theta.len() {
                    return Err(HmError::Usage("growth table needs matching, non-empty columns".into()));
                }
                if p.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(HmError::Usage("growth table p values must increase".into()));
                }
                if theta.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
                    return Err(HmError::Usage("growth table values must be positive".into()));
                }
                if theta.windows(2).any(|w| w[1] < w[0]) {
                    return Err(HmError::Usage("growth table must be non-decreasing".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            GrowthFunction::Constant { c } if *c == 1.0 => "const".into(),
            GrowthFunction::Constant { c } => format!("const:{c}"),
            GrowthFunction::Log => "log".into(),
            GrowthFunction::Power { beta } => format!("power:{beta}"),
            GrowthFunction::Table { .. } => "table".into(),
        }
    }

    pub fn theta(&self, p: f64) -> f64 {
        match self {
            GrowthFunction::Constant { c } => *c,
            GrowthFunction::Log => p.ln_1p(),
            GrowthFunction::Power { beta } => p.powf(*beta),
            GrowthFunction::Table { p: ps, theta } => {
                if p <= ps[0] {
                    return theta[0];
                }
                if p >= ps[ps.len() - 1] {
                    return theta[theta.len() - 1];
                }
                let k = ps.partition_point(|&q| q <= p);
                let (p0, p1) = (ps[k - 1], ps[k]);
                let s = (p - p0) / (p1 - p0);
                theta[k - 1] + s * (theta[k] - theta[k - 1])
            }
        }
    }

    /// `ln θ(e^x)`, accurate for very large `x`.
    pub fn ln_theta_of_ln(&self, x: f64) -> f64 {
        match self {
            GrowthFunction::Constant { c } => c.ln(),
            GrowthFunction::Log => {
                if x > 40.0 {
                    (x + (-x).exp().ln_1p()).ln()
                } else {
                    x.exp().ln_1p().ln()
                }
            }
            GrowthFunction::Power { beta } => beta * x,
            GrowthFunction::Table { p, .. } => {
                if x >= p[p.len() - 1].ln() {
                    self.theta(p[p.len() - 1]).ln()
                } else {
                    self.theta(x.exp()).ln()
                }
            }
        }
    }

    /// Whether the table is evaluated beyond its last point by the
    /// Osgood machinery (which probes `p` up to huge values).
    pub fn extrapolated(&self) -> bool {
        matches!(self, GrowthFunction::Table { .. })
    }
}

fn golden_min(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if (b - a).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Minimises `h` over `[lo, hi]` by a uniform scan then golden section.
fn scan_min(h: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let step = (hi - lo) / (SCAN_POINTS - 1) as f64;
    let mut best = (lo, h(lo));
    let mut best_k = 0;
    for k in 1..SCAN_POINTS {
        let x = if k == SCAN_POINTS - 1 { hi } else { lo + k as f64 * step };
        let v = h(x);
        if v < best.1 {
            best = (x, v);
            best_k = k;
        }
    }
    let a = if best_k == 0 {
        lo
    } else {
        lo + (best_k - 1) as f64 * step
    };
    let b = if best_k + 1 >= SCAN_POINTS {
        hi
    } else {
        lo + (best_k + 1) as f64 * step
    };
    let refined = golden_min(&h, a, b);
    if refined.1 < best.1 {
        refined
    } else {
        best
    }
}

/// Range of `ln p = ln(2/ε)` searched for a given `L = ln r > 0`.
fn ln_p_range(ln_l: Option<f64>) -> (f64, f64) {
    let lo = (2.0 / EPS_MAX).ln();
    let hi = match ln_l {
        // ε_min = min(1e-6, 1e-2/L)
        Some(ell) => (2e6f64).ln().max(200f64.ln() + ell),
        None => (2e6f64).ln(),
    };
    (lo, hi)
}

/// `ln Φ_θ(r) - ln L` for `L = ln r = e^ell > 0`; bounded for all
/// growth functions of interest.
pub fn phi_excess(theta: &GrowthFunction, ell: f64) -> f64 {
    let (lo, hi) = ln_p_range(Some(ell));
    let h = |s: f64| s + theta.ln_theta_of_ln(ell + s) + (-s).exp();
    scan_min(h, lo - ell, hi - ell).1
}

/// `ln Φ_θ` as a function of `ln r`.
pub fn ln_phi_theta_ln(theta: &GrowthFunction, ln_r: f64) -> f64 {
    if ln_r > 0.0 {
        let ell = ln_r.ln();
        ell + phi_excess(theta, ell)
    } else {
        let (lo, hi) = ln_p_range(None);
        scan_min(|x| x + theta.ln_theta_of_ln(x), lo, hi).1
    }
}

/// `Φ_θ(r)` for `r ≥ 0`.
pub fn phi_theta(theta: &GrowthFunction, r: f64) -> f64 {
    let ln_r = if r > 0.0 { r.ln() } else { f64::NEG_INFINITY };
    ln_phi_theta_ln(theta, ln_r).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OsgoodVerdict {
    /// The integral diverges: uniqueness holds in the Yudovich class.
    Divergent,
    /// The integral converges: no uniqueness guarantee.
    Convergent,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalExponent {
    /// Nesting depth: level `k` looks at `f_k(v) = e^v f_{k-1}(e^v)`.
    pub level: usize,
    pub window: (f64, f64),
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OsgoodReport {
    pub theta: String,
    pub verdict: OsgoodVerdict,
    pub r0: Vec<f64>,
    /// `I(r₀) = ∫_{r₀}^1 dr / (r Φ_θ(1/r))`.
    pub integrals: Vec<f64>,
    /// `I(r₀/100) - I(r₀)`.
    pub increments: Vec<f64>,
    pub exponents: Vec<LocalExponent>,
    pub table_extrapolated: bool,
}

/// Level windows in the level variable; deeper levels map to
/// astronomically small `r`, so their windows are narrower.
const LEVEL_WINDOWS: [(f64, f64); 3] = [(1e6, 1e12), (1e3, 1e5), (1e2, 6e2)];
const DIVERGENT_BELOW: f64 = 0.85;
const CONVERGENT_ABOVE: f64 = 1.15;

/// `ln f_k(v)` where `f_0(u) = 1/Φ_θ(e^u)` and
/// `f_k(v) = e^v f_{k-1}(e^v)`. The integral of `f_k` to infinity diverges
/// exactly when the Osgood integral does.
fn ln_f(theta: &GrowthFunction, level: usize, v: f64) -> f64 {
    match level {
        0 => {
            let ell = v.ln();
            -ell - phi_excess(theta, ell)
        }
        // e^v f_0(e^v) = e^v / (e^v e^{excess(v)})
        1 => -phi_excess(theta, v),
        _ => v + ln_f(theta, level - 1, v.exp()),
    }
}

/// `-d ln f_k / d ln v` averaged over the level window.
fn local_exponent(theta: &GrowthFunction, level: usize) -> LocalExponent {
    let (a, b) = LEVEL_WINDOWS[level];
    let exponent = -(ln_f(theta, level, b) - ln_f(theta, level, a)) / (b.ln() - a.ln());
    LocalExponent {
        level,
        window: (a, b),
        exponent,
    }
}

fn osgood_integrand(theta: &GrowthFunction, u: f64) -> f64 {
    (-ln_phi_theta_ln(theta, u)).exp()
}

/// Decides the Osgood condition and tabulates the partial integrals.
pub fn osgood_test(theta: &GrowthFunction) -> Result<OsgoodReport> {
    theta.validate()?;
    let mut exponents = Vec::new();
    let mut verdict = OsgoodVerdict::Inconclusive;
    for level in 0..LEVEL_WINDOWS.len() {
        let e = local_exponent(theta, level);
        let a = e.exponent;
        exponents.push(e);
        if !a.is_finite() {
            break;
        }
        if a < DIVERGENT_BELOW {
            verdict = OsgoodVerdict::Divergent;
            break;
        }
        if a > CONVERGENT_ABOVE {
            verdict = OsgoodVerdict::Convergent;
            break;
        }
    }

    let r0: Vec<f64> = (1..=8).map(|k| 10f64.powi(-2 * k)).collect();
    let (x, w) = gauss_legendre(12);
    let mut integrals = Vec::with_capacity(r0.len());
    let mut total = 0.0;
    let mut u_prev = 0.0;
    for &r in &r0 {
        let u_end = -r.ln();
        let panels = 24;
        let h = (u_end - u_prev) / panels as f64;
        let part: f64 = (0..panels)
            .into_par_iter()
            .map(|k| {
                let a = u_prev + k as f64 * h;
                x.iter()
                    .zip(&w)
                    .map(|(xi, wi)| 0.5 * h * wi * osgood_integrand(theta, a + 0.5 * h * (xi + 1.0)))
                    .sum::<f64>()
            })
            .collect::<Vec<_>>()
            .iter()
            .sum();
        total += part;
        integrals.push(total);
        u_prev = u_end;
    }
    let increments = integrals.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(OsgoodReport {
        theta: theta.label(),
        verdict,
        r0,
        integrals,
        increments,
        exponents,
        table_extrapolated: theta.extrapolated(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YudovichReport {
    pub theta: String,
    pub p_grid: Vec<f64>,
    pub norms: Vec<f64>,
    /// `‖f‖_p / θ(p)` on the grid.
    pub ratios: Vec<f64>,
    /// Supremum of the ratios over the grid.
    pub sup_ratio: f64,
    /// Ratios still increasing at the top of the grid, which suggests the
    /// field is outside the Yudovich space for this `θ`.
    pub unbounded_trend: bool,
    pub osgood: OsgoodReport,
    pub note: String,
}

fn check_p_grid(p_grid: &[f64]) -> Result<()> {
    if p_grid.is_empty() || p_grid.iter().any(|p| !(1.0..=64.0).contains(p)) {
        return Err(HmError::Usage("p grid must be non-empty and inside [1, 64]".into()));
    }
    if p_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(HmError::Usage("p grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Report from precomputed `‖f‖_p` values.
pub fn yudovich_report_from_norms(norms: Vec<f64>, theta: &GrowthFunction, p_grid: &[f64]) -> Result<YudovichReport> {
    check_p_grid(p_grid)?;
    theta.validate()?;
    if norms.len() != p_grid.len() {
        return Err(HmError::Usage("one norm per grid exponent is required".into()));
    }
    let ratios: Vec<f64> = norms.iter().zip(p_grid).map(|(n, &p)| n / theta.theta(p)).collect();
    let sup_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let k = ratios.len();
    let unbounded_trend = k >= 3 && ratios[k - 3] < ratios[k - 2] && ratios[k - 2] < ratios[k - 1];
    let osgood = osgood_test(theta)?;
    let note = match (unbounded_trend, osgood.verdict) {
        (false, OsgoodVerdict::Divergent) => {
            "field appears to lie in the Yudovich space and the Osgood condition holds: uniqueness is guaranteed".into()
        }
        (false, _) => format!(
            "field appears to lie in the Yudovich space for theta = {}, but the Osgood condition fails, \
             so the Yudovich uniqueness criterion does not cover it: existence without a uniqueness guarantee",
            theta.label()
        ),
        (true, _) => format!(
            "norm ratios keep growing at the top of the p grid: the field is likely outside the Yudovich space \
             for theta = {}",
            theta.label()
        ),
    };
    Ok(YudovichReport {
        theta: theta.label(),
        p_grid: p_grid.to_vec(),
        norms,
        ratios,
        sup_ratio,
        unbounded_trend,
        osgood,
        note,
    })
}

/// `sup_p ‖f‖_p / θ(p)` over the grid with grid quadrature for the norms.
pub fn yudovich_norm(f: &SampledField, theta: &GrowthFunction, p_grid: &[f64]) -> Result<YudovichReport> {
    check_p_grid(p_grid)?;
    let norms = p_grid.par_iter().map(|&p| f.lp_norm(p)).collect::<Result<Vec<_>>>()?;
    yudovich_report_from_norms(norms, theta, p_grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    /// Set when the curve overflowed or exhausted the step budget before
    /// `t_end`.
    pub truncated: bool,
}

impl Envelope {
    /// Linear interpolation; `None` past the end of a truncated curve.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        let last = *self.t.last()?;
        if t > last * (1.0 + 1e-12) {
            return None;
        }
        let k = self.t.partition_point(|&s| s <= t);
        if k == 0 {
            return Some(self.y[0]);
        }
        if k >= self.t.len() {
            return Some(*self.y.last().unwrap());
        }
        let (t0, t1) = (self.t[k - 1], self.t[k]);
        let s = (t - t0) / (t1 - t0);
        Some(self.y[k - 1] + s * (self.y[k] - self.y[k - 1]))
    }
}

const MAX_ENVELOPE_STEPS: usize = 5_000_000;

/// Integrates `Ẏ = λ Y Φ_θ(1/Y)` from `Y(0) = y0` with RK4, limiting the
/// relative change per step to `1e-3`.
pub fn osgood_envelope(theta: &GrowthFunction, lambda: f64, y0: f64, t_end: f64) -> Result<Envelope> {
    theta.validate()?;
    if !(y0 > 0.0 && y0.is_finite()) {
        return Err(HmError::Usage(format!("envelope start must be positive, got {y0}")));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) || !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(HmError::Usage("envelope needs lambda >= 0 and t_end >= 0".into()));
    }
    let f = |y: f64| lambda * y * phi_theta(theta, 1.0 / y);
    let mut t = vec![0.0];
    let mut ys = vec![y0];
    if lambda == 0.0 || t_end == 0.0 {
        t.push(t_end);
        ys.push(y0);
        return Ok(Envelope {
            t,
            y: ys,
            truncated: false,
        });
    }
    let mut time = 0.0;
    let mut y = y0;
    let mut truncated = false;
    while time < t_end {
        if t.len() > MAX_ENVELOPE_STEPS {
            truncated = true;
            break;
        }
        let rate = f(y);
        let h = (1e-3 * y / rate).min(t_end - time);
        let k1 = rate;
        let k2 = f(y + 0.5 * h * k1);
        let k3 = f(y + 0.5 * h * k2);
        let k4 = f(y + h * k3);
        let next = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !next.is_finite() || next > 1e300 {
            truncated = true;
            break;
        }
        y = next.max(y);
        time = if h == t_end - time { t_end } else { time + h };
        t.push(time);
        ys.push(y);
    }
    Ok(Envelope { t, y: ys, truncated })
}
