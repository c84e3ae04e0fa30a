//! Parameter extraction from normalized fringes and synthesized fields.
//!
//! [`fit_hom`] fits `N(dT) = B [1 - V Gamma(dT) cos(dw dT)]` by weighted
//! Levenberg-Marquardt; [`beat_psd`] is an averaged Hann-windowed
//! periodogram of `e1(t) conj(e2(t))`; [`mc_vs_analytic`] scores a
//! fringe against a fully specified [`FringeModel`].

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::correlator::NormalizedFringe;
use crate::error::{Error, Result};
use crate::spectral::{coincidence_probability, FringeModel, GammaSign, Lineshape};

pub const MAX_ITERATIONS: usize = 200;
pub const STEP_TOLERANCE: f64 = 1e-8;
/// Relative chi-square decrease below which an undamped step counts as converged.
pub const CHI2_TOLERANCE: f64 = 1e-10;
/// Bins with fewer counts trigger 4:1 aggregation.
pub const MIN_BIN_COUNTS: u64 = 10;
pub const AGGREGATION: usize = 4;

/// Shape of the mutual coherence used by the fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum GammaForm {
    /// `exp(-|dT| / tau_c)` with free `tau_c`.
    EffectiveLorentzian,
    /// Product of two fixed lineshapes' `g1`.
    Physical { lineshape_1: Lineshape, lineshape_2: Lineshape, #[serde(default)] sign: GammaSign },
    /// As `Physical`, but each lineshape's widths scale freely. The given
    /// lineshapes seed the fit.
    PhysicalFree { lineshape_1: Lineshape, lineshape_2: Lineshape, #[serde(default)] sign: GammaSign },
}

/// Whether a parameter is fitted or held at a value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Freedom {
    Free,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitModel {
    pub gamma_form: GammaForm,
    /// Angular frequency, rad/s.
    pub delta_omega: Freedom,
    pub baseline: Freedom,
}

impl FitModel {
    pub fn effective_lorentzian() -> Self {
        FitModel { gamma_form: GammaForm::EffectiveLorentzian, delta_omega: Freedom::Fixed(0.0), baseline: Freedom::Free }
    }

    pub fn physical(lineshape_1: Lineshape, lineshape_2: Lineshape) -> Self {
        FitModel {
            gamma_form: GammaForm::Physical { lineshape_1, lineshape_2, sign: GammaSign::Envelope },
            delta_omega: Freedom::Fixed(0.0),
            baseline: Freedom::Free,
        }
    }

    pub fn physical_free(lineshape_1: Lineshape, lineshape_2: Lineshape) -> Self {
        FitModel {
            gamma_form: GammaForm::PhysicalFree { lineshape_1, lineshape_2, sign: GammaSign::Envelope },
            delta_omega: Freedom::Fixed(0.0),
            baseline: Freedom::Free,
        }
    }

    pub fn with_delta_omega(mut self, freedom: Freedom) -> Self {
        self.delta_omega = freedom;
        self
    }

    pub fn with_baseline(mut self, freedom: Freedom) -> Self {
        self.baseline = freedom;
        self
    }

    pub fn with_sign(mut self, sign: GammaSign) -> Self {
        match &mut self.gamma_form {
            GammaForm::Physical { sign: s, .. } | GammaForm::PhysicalFree { sign: s, .. } => *s = sign,
            GammaForm::EffectiveLorentzian => {}
        }
        self
    }

    fn validate(&self) -> Result<()> {
        match &self.gamma_form {
            GammaForm::EffectiveLorentzian => {}
            GammaForm::Physical { lineshape_1, lineshape_2, .. } | GammaForm::PhysicalFree { lineshape_1, lineshape_2, .. } => {
                lineshape_1.validate_closed_form()?;
                lineshape_2.validate_closed_form()?;
            }
        }
        for (name, f) in [("delta_omega", self.delta_omega), ("baseline", self.baseline)] {
            if let Freedom::Fixed(v) = f {
                if !v.is_finite() {
                    return Err(Error::invalid(name, "fixed value must be finite"));
                }
            }
        }
        Ok(())
    }
}

/// Optional starting point; unset entries are auto-initialized.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitInit {
    pub visibility: Option<f64>,
    pub tau_c: Option<f64>,
    pub delta_omega: Option<f64>,
    pub baseline: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    Visibility,
    TauC,
    Width1,
    Width2,
    DeltaOmega,
    Baseline,
}

impl Param {
    pub fn name(self) -> &'static str {
        match self {
            Param::Visibility => "visibility",
            Param::TauC => "tau_c",
            Param::Width1 => "width_1",
            Param::Width2 => "width_2",
            Param::DeltaOmega => "delta_omega",
            Param::Baseline => "baseline",
        }
    }

    fn typical(self) -> f64 {
        match self {
            Param::Visibility | Param::Baseline => 1.0,
            Param::TauC => 1e-7,
            Param::Width1 | Param::Width2 => 1e6,
            Param::DeltaOmega => 1e7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterEstimate {
    pub name: String,
    pub value: f64,
    /// One standard deviation.
    pub sigma: f64,
}

/// Result of a converged fringe fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomFit {
    pub model: FitModel,
    /// Fitted parameters. `delta_omega` is reported as `|dw|`.
    pub parameters: Vec<ParameterEstimate>,
    /// Sign of the fitted `dw`; the model is even in `dw`, so this carries
    /// no information unless the data are asymmetric.
    pub delta_omega_sign: i8,
    pub chi2: f64,
    pub dof: usize,
    pub reduced_chi2: f64,
    /// Weighted residuals `(value - model) / error` per fitted bin.
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Bins merged per fitted point (1 when no aggregation was needed).
    pub aggregation: usize,
}

impl HomFit {
    pub fn get(&self, name: &str) -> Option<&ParameterEstimate> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn visibility(&self) -> &ParameterEstimate {
        self.get("visibility").expect("visibility is always fitted")
    }

    pub fn tau_c(&self) -> Option<&ParameterEstimate> {
        self.get("tau_c")
    }

    /// `|dw|`, rad/s, when fitted.
    pub fn delta_omega(&self) -> Option<&ParameterEstimate> {
        self.get("delta_omega")
    }

    /// `1 / tau_c` with propagated error, Hz.
    pub fn effective_bandwidth(&self) -> Option<ParameterEstimate> {
        self.tau_c().map(|t| ParameterEstimate {
            name: "effective_bandwidth".into(),
            value: 1.0 / t.value,
            sigma: t.sigma / (t.value * t.value),
        })
    }

    /// Fitted model value at delay `t`, seconds.
    pub fn evaluate(&self, t: f64) -> f64 {
        let value = |name: &str, fallback: f64| self.get(name).map_or(fallback, |p| p.value);
        let fixed = |f: Freedom, fallback: f64| match f {
            Freedom::Fixed(v) => v,
            Freedom::Free => fallback,
        };
        let params = Params {
            visibility: value("visibility", 0.0),
            tau_c: value("tau_c", 1.0),
            width_1: value("width_1", 1.0),
            width_2: value("width_2", 1.0),
            delta_omega: fixed(self.model.delta_omega, value("delta_omega", 0.0) * f64::from(self.delta_omega_sign)),
            baseline: fixed(self.model.baseline, value("baseline", 1.0)),
        };
        Evaluator { form: &self.model.gamma_form }.value(&params, t)
    }

    /// Structured report with conventions spelled out.
    pub fn report(&self) -> serde_json::Value {
        let conventions = serde_json::json!({
            "gamma_form": match &self.model.gamma_form {
                GammaForm::EffectiveLorentzian => "effective_lorentzian",
                GammaForm::Physical { .. } => "physical",
                GammaForm::PhysicalFree { .. } => "physical_free",
            },
            "gamma_sign": match &self.model.gamma_form {
                GammaForm::Physical { sign, .. } | GammaForm::PhysicalFree { sign, .. } => format!("{sign:?}").to_lowercase(),
                GammaForm::EffectiveLorentzian => "envelope".into(),
            },
            "width_convention": "effective_bandwidth = 1 / tau_c",
            "delta_omega": "absolute value in rad/s; sign reported separately",
            "uncertainties": "1 sigma from the weighted Jacobian",
        });
        let mut params: Vec<serde_json::Value> = self
            .parameters
            .iter()
            .map(|p| serde_json::json!({"name": p.name, "value": p.value, "sigma": p.sigma}))
            .collect();
        if let Some(bw) = self.effective_bandwidth() {
            params.push(serde_json::json!({"name": bw.name, "value": bw.value, "sigma": bw.sigma}));
        }
        if let Some(dw) = self.delta_omega() {
            params.push(serde_json::json!({
                "name": "delta_f",
                "value": dw.value / (2.0 * PI),
                "sigma": dw.sigma / (2.0 * PI),
            }));
        }
        serde_json::json!({
            "parameters": params,
            "delta_omega_sign": self.delta_omega_sign,
            "chi2": self.chi2,
            "dof": self.dof,
            "reduced_chi2": self.reduced_chi2,
            "converged": self.converged,
            "iterations": self.iterations,
            "aggregation": self.aggregation,
            "conventions": conventions,
            "model": self.model,
        })
    }
}

/// Full parameter vector; entries not in the free list stay at their
/// initial/fixed values.
#[derive(Debug, Clone, Copy)]
struct Params {
    visibility: f64,
    tau_c: f64,
    width_1: f64,
    width_2: f64,
    delta_omega: f64,
    baseline: f64,
}

impl Params {
    fn get(&self, p: Param) -> f64 {
        match p {
            Param::Visibility => self.visibility,
            Param::TauC => self.tau_c,
            Param::Width1 => self.width_1,
            Param::Width2 => self.width_2,
            Param::DeltaOmega => self.delta_omega,
            Param::Baseline => self.baseline,
        }
    }

    fn set(&mut self, p: Param, v: f64) {
        match p {
            Param::Visibility => self.visibility = v,
            Param::TauC => self.tau_c = v,
            Param::Width1 => self.width_1 = v,
            Param::Width2 => self.width_2 = v,
            Param::DeltaOmega => self.delta_omega = v,
            Param::Baseline => self.baseline = v,
        }
    }
}

/// Evaluates the fit model; precomputes nothing so it is cheap to clone.
struct Evaluator<'a> {
    form: &'a GammaForm,
}

impl Evaluator<'_> {
    fn gamma(&self, p: &Params, t: f64) -> f64 {
        match self.form {
            GammaForm::EffectiveLorentzian => (-t.abs() / p.tau_c).exp(),
            GammaForm::Physical { lineshape_1, lineshape_2, sign } => {
                signed(lineshape_1.g1_raw(t) * lineshape_2.g1_raw(t), *sign)
            }
            GammaForm::PhysicalFree { lineshape_1, lineshape_2, sign } => {
                let l1 = lineshape_1.scaled(p.width_1 / lineshape_1.primary_width());
                let l2 = lineshape_2.scaled(p.width_2 / lineshape_2.primary_width());
                signed(l1.g1_raw(t) * l2.g1_raw(t), *sign)
            }
        }
    }

    fn value(&self, p: &Params, t: f64) -> f64 {
        p.baseline * (1.0 - p.visibility * self.gamma(p, t) * (p.delta_omega * t).cos())
    }
}

fn signed(product: f64, sign: GammaSign) -> f64 {
    match sign {
        GammaSign::Envelope => product.abs(),
        GammaSign::Signed => product,
    }
}

/// Points actually fitted, after optional aggregation.
struct FitData {
    t: Vec<f64>,
    y: Vec<f64>,
    sigma: Vec<f64>,
    aggregation: usize,
    bin_width: f64,
}

fn prepare(fringe: &NormalizedFringe, min_points: usize) -> Result<FitData> {
    if fringe.values.len() != fringe.centers.len() || fringe.errors.len() != fringe.centers.len() {
        return Err(Error::InsufficientData("fringe columns have different lengths".into()));
    }
    let mut data = FitData {
        t: fringe.centers.clone(),
        y: fringe.values.clone(),
        sigma: fringe.errors.clone(),
        aggregation: 1,
        bin_width: fringe.bin_width,
    };
    if let Some(counts) = &fringe.counts {
        // per-bin exposure, recovered from err = sqrt(max(c, 1)) / (B * exposure)
        let mut exposure: Vec<f64> = counts
            .iter()
            .zip(&fringe.errors)
            .map(|(&c, &e)| (c.max(1) as f64).sqrt() / (fringe.baseline * e))
            .collect();
        let mut counts = counts.clone();
        let low = |c: &[u64]| c.iter().filter(|&&n| n < MIN_BIN_COUNTS).count() * 100 > c.len();
        while low(&counts) && counts.len() / AGGREGATION >= min_points {
            let groups = counts.len() / AGGREGATION;
            let mut t = Vec::with_capacity(groups);
            let mut merged = Vec::with_capacity(groups);
            let mut merged_exposure = Vec::with_capacity(groups);
            for g in 0..groups {
                let range = g * AGGREGATION..(g + 1) * AGGREGATION;
                t.push(data.t[range.clone()].iter().sum::<f64>() / AGGREGATION as f64);
                merged.push(counts[range.clone()].iter().sum::<u64>());
                merged_exposure.push(exposure[range].iter().sum::<f64>());
            }
            data.aggregation *= AGGREGATION;
            data.bin_width *= AGGREGATION as f64;
            let b = fringe.baseline;
            data.y = merged.iter().zip(&merged_exposure).map(|(&c, e)| c as f64 / (b * e)).collect();
            data.sigma = merged.iter().zip(&merged_exposure).map(|(&c, e)| (c.max(1) as f64).sqrt() / (b * e)).collect();
            data.t = t;
            counts = merged;
            exposure = merged_exposure;
        }
    }
    if let Some(i) = data.sigma.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::InsufficientData(format!("non-positive error at bin {i}")));
    }
    if data.t.len() < min_points {
        return Err(Error::InsufficientData(format!(
            "{} bins is fewer than 10x the free parameter count ({min_points})",
            data.t.len()
        )));
    }
    Ok(data)
}

/// Moving average with a centred window of `2 * half + 1` points.
fn smooth(values: &[f64], half: usize) -> Vec<f64> {
    let n = values.len();
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + values[i];
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Auto-initialization from the data shape.
fn initial_guess(data: &FitData, model: &FitModel, init: &FitInit) -> Params {
    let t_max = data.t.iter().fold(0.0f64, |m, &t| m.max(t.abs()));
    let baseline = init.baseline.unwrap_or_else(|| match model.baseline {
        Freedom::Fixed(b) => b,
        Freedom::Free => {
            let wing: Vec<f64> =
                data.t.iter().zip(&data.y).filter(|(t, _)| t.abs() >= 0.5 * t_max).map(|(_, y)| *y).collect();
            if wing.is_empty() {
                1.0
            } else {
                wing.iter().sum::<f64>() / wing.len() as f64
            }
        }
    });
    let half = ((10e-9 / data.bin_width).round() as usize).max(1);
    let smoothed = smooth(&data.y, half);
    let min = smoothed.iter().cloned().fold(f64::INFINITY, f64::min);
    let visibility = init.visibility.unwrap_or_else(|| (1.0 - min / baseline).clamp(0.01, 1.0));

    // envelope of |1 - y/B| seen from outside in, reaching 1/e of the depth
    let deviation: Vec<f64> = smoothed.iter().map(|y| (1.0 - y / baseline).abs()).collect();
    let mut order: Vec<usize> = (0..data.t.len()).collect();
    order.sort_by(|&a, &b| data.t[b].abs().total_cmp(&data.t[a].abs()));
    let mut envelope = 0.0f64;
    let mut tau_guess = None;
    for &i in &order {
        envelope = envelope.max(deviation[i]);
        if envelope >= visibility / std::f64::consts::E {
            tau_guess = Some(data.t[i].abs());
            break;
        }
    }
    let tau_c = init.tau_c.unwrap_or_else(|| tau_guess.unwrap_or(0.25 * t_max).max(data.bin_width));

    let delta_omega = match model.delta_omega {
        Freedom::Fixed(v) => v,
        Freedom::Free => init.delta_omega.unwrap_or_else(|| fourier_peak(data, baseline, 4.0 * tau_c)),
    };

    let (width_1, width_2) = match &model.gamma_form {
        GammaForm::PhysicalFree { lineshape_1, lineshape_2, .. } => (lineshape_1.primary_width(), lineshape_2.primary_width()),
        _ => (1.0, 1.0),
    };
    Params { visibility, tau_c, width_1, width_2, delta_omega, baseline }
}

/// Angular frequency of the strongest component of `1 - y/B` within
/// `|t| <= reach`. A DC peak maps to the lowest resolvable frequency so the
/// optimizer can still move.
fn fourier_peak(data: &FitData, baseline: f64, reach: f64) -> f64 {
    let signal: Vec<f64> = data
        .t
        .iter()
        .zip(&data.y)
        .filter(|(t, _)| t.abs() <= reach)
        .map(|(_, y)| 1.0 - y / baseline)
        .collect();
    let len = signal.len().max(2);
    let n = (16 * len).next_power_of_two().max(4096);
    let mut buf: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); n];
    for (b, s) in buf.iter_mut().zip(&signal) {
        b.re = *s;
    }
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let (peak, _) = buf[..=n / 2]
        .iter()
        .enumerate()
        .map(|(k, c)| (k, c.norm()))
        .fold((0, f64::MIN), |best, cur| if cur.1 > best.1 { cur } else { best });
    let freq = if peak == 0 { 1.0 / (len as f64 * data.bin_width) } else { peak as f64 / (n as f64 * data.bin_width) };
    2.0 * PI * freq
}

fn free_params(model: &FitModel) -> Vec<Param> {
    let mut free = vec![Param::Visibility];
    match model.gamma_form {
        GammaForm::EffectiveLorentzian => free.push(Param::TauC),
        GammaForm::Physical { .. } => {}
        GammaForm::PhysicalFree { .. } => {
            free.push(Param::Width1);
            free.push(Param::Width2);
        }
    }
    if model.delta_omega == Freedom::Free {
        free.push(Param::DeltaOmega);
    }
    if model.baseline == Freedom::Free {
        free.push(Param::Baseline);
    }
    free
}

struct Bounds {
    max_delta_omega: f64,
}

impl Bounds {
    fn clamp(&self, p: Param, v: f64) -> f64 {
        match p {
            Param::Visibility => v.clamp(0.0, 1.0),
            Param::TauC => v.max(1e-12),
            Param::Width1 | Param::Width2 => v.max(1.0),
            Param::DeltaOmega => v.clamp(-self.max_delta_omega, self.max_delta_omega),
            Param::Baseline => v.max(1e-12),
        }
    }
}

/// Weighted fit of a normalized fringe.
pub fn fit_hom(fringe: &NormalizedFringe, model: &FitModel, init: Option<&FitInit>) -> Result<HomFit> {
    model.validate()?;
    let free = free_params(model);
    let data = prepare(fringe, 10 * free.len())?;
    let default_init = FitInit::default();
    let mut params = initial_guess(&data, model, init.unwrap_or(&default_init));
    if let Freedom::Fixed(b) = model.baseline {
        params.baseline = b;
    }
    let bounds = Bounds { max_delta_omega: PI / fringe.bin_width };
    for &p in &free {
        params.set(p, bounds.clamp(p, params.get(p)));
    }
    let eval = Evaluator { form: &model.gamma_form };

    let residuals = |p: &Params| -> DVector<f64> {
        DVector::from_iterator(
            data.t.len(),
            data.t.iter().zip(&data.y).zip(&data.sigma).map(|((&t, &y), &s)| (y - eval.value(p, t)) / s),
        )
    };
    // Weighted model Jacobian by central differences, taken with respect to
    // x / scale so the normal equations stay well conditioned.
    let scales = |p: &Params| -> Vec<f64> { free.iter().map(|&q| p.get(q).abs().max(q.typical())).collect() };
    let jacobian = |p: &Params| -> DMatrix<f64> {
        let mut j = DMatrix::zeros(data.t.len(), free.len());
        for (c, &param) in free.iter().enumerate() {
            let x = p.get(param);
            let scale = x.abs().max(param.typical());
            let h = 1e-6 * scale;
            let (mut lo, mut hi) = (*p, *p);
            lo.set(param, x - h);
            hi.set(param, x + h);
            for (r, (&t, &s)) in data.t.iter().zip(&data.sigma).enumerate() {
                j[(r, c)] = (eval.value(&hi, t) - eval.value(&lo, t)) * scale / (2.0 * h * s);
            }
        }
        j
    };

    let mut r = residuals(&params);
    let mut chi2 = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let j = jacobian(&params);
        let scale = scales(&params);
        let jtj = j.transpose() * &j;
        let jtr = j.transpose() * &r;
        let diag_max = (0..free.len()).map(|i| jtj[(i, i)]).fold(0.0f64, f64::max);
        let mut accepted = None;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for i in 0..free.len() {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12 * diag_max).max(f64::MIN_POSITIVE);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = params;
            for (i, &p) in free.iter().enumerate() {
                trial.set(p, bounds.clamp(p, params.get(p) + step[i] * scale[i]));
            }
            let r_trial = residuals(&trial);
            let chi2_trial = r_trial.norm_squared();
            if chi2_trial.is_finite() && chi2_trial <= chi2 {
                accepted = Some((trial, r_trial, chi2_trial));
                lambda = (lambda / 10.0).max(1e-12);
                break;
            }
            lambda *= 10.0;
        }
        match accepted {
            Some((trial, r_trial, chi2_trial)) => {
                let small = free.iter().all(|&p| {
                    let (old, new) = (params.get(p), trial.get(p));
                    (new - old).abs() <= STEP_TOLERANCE * old.abs().max(1e-6 * p.typical())
                });
                params = trial;
                r = r_trial;
                // undamped and no longer reducing chi2: a flat valley floor
                let stalled = lambda <= 1e-6 && chi2 - chi2_trial <= CHI2_TOLERANCE * chi2;
                chi2 = chi2_trial;
                if small || stalled {
                    converged = true;
                    break;
                }
            }
            None => {
                // no downhill step at any damping: numerically at the minimum
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(Error::NonConvergence { iterations });
    }

    let j = jacobian(&params);
    check_rank(&j, &free)?;
    let scale = scales(&params);
    let scaled_covariance = (j.transpose() * &j)
        .try_inverse()
        .ok_or_else(|| Error::RankDeficient("normal matrix is singular".into()))?;
    let covariance = DMatrix::from_fn(free.len(), free.len(), |a, b| scaled_covariance[(a, b)] * scale[a] * scale[b]);

    let parameters = free
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let mut value = params.get(p);
            if p == Param::DeltaOmega {
                value = value.abs();
            }
            ParameterEstimate { name: p.name().into(), value, sigma: covariance[(i, i)].max(0.0).sqrt() }
        })
        .collect();
    let dof = data.t.len().saturating_sub(free.len()).max(1);
    Ok(HomFit {
        model: model.clone(),
        parameters,
        delta_omega_sign: if params.delta_omega < 0.0 { -1 } else { 1 },
        chi2,
        dof,
        reduced_chi2: chi2 / dof as f64,
        residuals: r.iter().copied().collect(),
        converged,
        iterations,
        aggregation: data.aggregation,
    })
}

/// Expects the scaled Jacobian, whose columns are per unit relative change
/// of each parameter, so the test does not depend on units.
fn check_rank(j: &DMatrix<f64>, free: &[Param]) -> Result<()> {
    let norms: Vec<f64> = (0..free.len()).map(|c| j.column(c).norm()).collect();
    let max = norms.iter().cloned().fold(0.0f64, f64::max);
    let dead: Vec<&str> =
        free.iter().zip(&norms).filter(|(_, &n)| !(n > 1e-9 * max)).map(|(p, _)| p.name()).collect();
    if !dead.is_empty() {
        return Err(Error::RankDeficient(dead.join(", ")));
    }
    let mut scaled = j.clone();
    for c in 0..free.len() {
        let n = scaled.column(c).norm();
        scaled.column_mut(c).scale_mut(1.0 / n);
    }
    let eig = SymmetricEigen::new(scaled.transpose() * &scaled);
    let (imin, min) = eig.eigenvalues.iter().enumerate().fold((0, f64::INFINITY), |b, (i, &v)| if v < b.1 { (i, v) } else { b });
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    if min <= 1e-12 * max {
        let vector = eig.eigenvectors.column(imin);
        let worst = (0..free.len()).max_by(|&a, &b| vector[a].abs().total_cmp(&vector[b].abs())).unwrap_or(0);
        return Err(Error::RankDeficient(format!("{} (degenerate combination)", free[worst].name())));
    }
    Ok(())
}

/// Welch estimate on a frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdEstimate {
    /// Offsets from the common reference, Hz, ascending.
    pub frequencies: Vec<f64>,
    /// 1/Hz.
    pub density: Vec<f64>,
    pub segments: usize,
}

impl PsdEstimate {
    pub fn df(&self) -> f64 {
        if self.frequencies.len() > 1 {
            self.frequencies[1] - self.frequencies[0]
        } else {
            0.0
        }
    }

    pub fn area(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.df()
    }

    /// Frequency of the largest density value.
    pub fn peak_frequency(&self) -> f64 {
        let (i, _) = self.density.iter().enumerate().fold((0, f64::MIN), |b, (i, &d)| if d > b.1 { (i, d) } else { b });
        self.frequencies[i]
    }

    /// CSV: `freq_Hz,density`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "freq_Hz,density")?;
        for (f, d) in self.frequencies.iter().zip(&self.density) {
            writeln!(out, "{f},{d}")?;
        }
        Ok(())
    }
}

pub const MIN_WELCH_SEGMENTS: usize = 20;

/// Averaged periodogram of `e1(t) conj(e2(t))` with a periodic Hann window.
///
/// Normalized so that the area equals the mean power of the product (1 for
/// unit-amplitude fields).
pub fn beat_psd<I1, I2>(field_1: I1, field_2: I2, dt: f64, segment_length: usize, overlap: f64) -> Result<PsdEstimate>
where
    I1: IntoIterator<Item = Complex64>,
    I2: IntoIterator<Item = Complex64>,
{
    if segment_length < 8 {
        return Err(Error::invalid("segment_length", "must be at least 8 samples"));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::invalid("overlap", "must lie in [0, 1)"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", "must be > 0"));
    }
    let l = segment_length;
    let hop = (l - (overlap * l as f64).round() as usize).max(1);
    let window: Vec<f64> = (0..l).map(|n| 0.5 * (1.0 - (2.0 * PI * n as f64 / l as f64).cos())).collect();
    let window_power: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(l);

    let mut acc = vec![0.0f64; l];
    let mut buf: Vec<Complex64> = Vec::with_capacity(l + hop);
    let mut scratch = vec![Complex64::new(0.0, 0.0); l];
    let mut segments = 0usize;
    let mut it1 = field_1.into_iter();
    let mut it2 = field_2.into_iter();
    loop {
        let (a, b) = (it1.next(), it2.next());
        let (e1, e2) = match (a, b) {
            (Some(x), Some(y)) => (x, y),
            (None, None) => break,
            _ => return Err(Error::StreamMismatch("field streams have different lengths".into())),
        };
        buf.push(e1 * e2.conj());
        if buf.len() == l {
            for ((s, z), w) in scratch.iter_mut().zip(&buf).zip(&window) {
                *s = z * *w;
            }
            fft.process(&mut scratch);
            for (a, s) in acc.iter_mut().zip(&scratch) {
                *a += s.norm_sqr();
            }
            segments += 1;
            buf.drain(..hop);
        }
    }
    if segments < MIN_WELCH_SEGMENTS {
        return Err(Error::TooFewSegments { needed: MIN_WELCH_SEGMENTS, have: segments });
    }
    let scale = dt / (window_power * segments as f64);
    let half = l / 2;
    let frequencies = (0..l).map(|i| (i as f64 - half as f64) / (l as f64 * dt)).collect();
    let density = (0..l).map(|i| acc[(i + l - half) % l] * scale).collect();
    Ok(PsdEstimate { frequencies, density, segments })
}

/// Width diagnostics of a single-lobed spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdWidth {
    /// Hz.
    pub fwhm: f64,
    /// Full width at 10 % of the maximum, Hz.
    pub width_10: f64,
    /// `fwhm / width_10`: ~1 for a flat top, 0.55 Gaussian, 1/3 Lorentzian.
    pub edge_steepness: f64,
}

impl PsdWidth {
    pub const FLAT_TOP_MIN: f64 = 0.6;
    pub const LORENTZIAN_MAX: f64 = 0.45;

    pub fn is_flat_top(&self) -> bool {
        self.edge_steepness >= Self::FLAT_TOP_MIN
    }

    pub fn is_lorentzian_like(&self) -> bool {
        self.edge_steepness <= Self::LORENTZIAN_MAX
    }
}

/// FWHM by linear interpolation at half maximum.
///
/// Regions above half maximum separated by a dip below a quarter of the
/// maximum count as separate lobes, which is an error.
pub fn psd_width(psd: &PsdEstimate) -> Result<PsdWidth> {
    let d = &psd.density;
    let f = &psd.frequencies;
    if d.len() < 3 || d.len() != f.len() {
        return Err(Error::InsufficientData("spectrum needs at least three points".into()));
    }
    let (peak, max) = d.iter().enumerate().fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
    if !(max > 0.0) {
        return Err(Error::InsufficientData("spectrum has no positive density".into()));
    }
    let half = 0.5 * max;
    let quarter = 0.25 * max;
    // lobes: runs above half max, merged across gaps that stay above a quarter
    let mut lobes: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < d.len() {
        if d[i] >= half {
            let start = i;
            while i < d.len() && d[i] >= half {
                i += 1;
            }
            let end = i - 1;
            match lobes.last_mut() {
                Some(last) if d[last.1..=start].iter().all(|&v| v >= quarter) => last.1 = end,
                _ => lobes.push((start, end)),
            }
        } else {
            i += 1;
        }
    }
    if lobes.len() != 1 {
        return Err(Error::Ambiguous(format!("{} separate lobes above half maximum", lobes.len())));
    }
    let (lo, hi) = lobes[0];
    debug_assert!(lo <= peak && peak <= hi);
    let fwhm = crossing_right(d, f, hi, half) - crossing_left(d, f, lo, half);
    let mut lo10 = lo;
    while lo10 > 0 && d[lo10 - 1] >= 0.1 * max {
        lo10 -= 1;
    }
    let mut hi10 = hi;
    while hi10 + 1 < d.len() && d[hi10 + 1] >= 0.1 * max {
        hi10 += 1;
    }
    let width_10 = crossing_right(d, f, hi10, 0.1 * max) - crossing_left(d, f, lo10, 0.1 * max);
    Ok(PsdWidth { fwhm, width_10, edge_steepness: fwhm / width_10 })
}

/// Interpolated crossing between `i - 1` (below) and `i` (at/above).
fn crossing_left(d: &[f64], f: &[f64], i: usize, level: f64) -> f64 {
    if i == 0 {
        return f[0];
    }
    let frac = (level - d[i - 1]) / (d[i] - d[i - 1]);
    f[i - 1] + frac * (f[i] - f[i - 1])
}

/// Interpolated crossing between `i` (at/above) and `i + 1` (below).
fn crossing_right(d: &[f64], f: &[f64], i: usize, level: f64) -> f64 {
    if i + 1 >= d.len() {
        return f[d.len() - 1];
    }
    let frac = (d[i] - level) / (d[i] - d[i + 1]);
    f[i] + frac * (f[i + 1] - f[i])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McComparison {
    pub reduced_chi2: f64,
    pub max_abs_z: f64,
    pub bins: usize,
}

/// Per-bin z-scores of a fringe against a fully specified model.
pub fn mc_vs_analytic(fringe: &NormalizedFringe, model: &FringeModel) -> McComparison {
    let mut chi2 = 0.0;
    let mut max_abs_z = 0.0f64;
    for ((&t, &v), &e) in fringe.centers.iter().zip(&fringe.values).zip(&fringe.errors) {
        let z = (v - coincidence_probability(model, t)) / e;
        chi2 += z * z;
        max_abs_z = max_abs_z.max(z.abs());
    }
    let bins = fringe.values.len();
    McComparison { reduced_chi2: chi2 / bins.max(1) as f64, max_abs_z, bins }
}
