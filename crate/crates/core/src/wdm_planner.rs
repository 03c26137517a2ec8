//! WDM spectrum and resonator geometry planning.
//!
//! The racetrack photodetector (RTR-PD) fixes the comb: one common cavity
//! perimeter has to resonate at every carrier, so the carriers are the
//! cavity's consecutive longitudinal modes. The modulator rings are then
//! sized so each ring's free spectral range covers the whole comb.
//!
//! Wavelengths are carried in nm, geometry in µm.

use std::f64::consts::PI;

use serde::Serialize;

/// Fixed-point solves stop once successive iterates agree to this (nm).
const FIXED_POINT_TOL_NM: f64 = 1e-9;
const FIXED_POINT_MAX_ITERS: usize = 100;
/// Largest acceptable resonance residual |λ − n_eff(λ)·L/m| in a finished plan (nm).
pub const RESONANCE_TOL_NM: f64 = 1e-6;
/// Doubled-cavity resonances of an interleaved spectrum must hold to this (nm).
pub const MMA_RESONANCE_TOL_NM: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("invalid planner config: {0}")]
    InvalidConfig(String),
    #[error("invalid material curve: {0}")]
    InvalidCurve(String),
    #[error("wavelength {lambda_nm:.4} nm is outside the material domain [{lo}, {hi}] nm")]
    DomainExceeded { lambda_nm: f64, lo: f64, hi: f64 },
    #[error("resonance solve for mode {mode} did not converge (last step {step_nm:e} nm)")]
    NonConvergence { mode: u64, step_nm: f64 },
    #[error("infeasible plan: {0}")]
    InfeasiblePlan(String),
    #[error("interleaved carrier {offset_nm:.4} nm collides with carrier {base_nm:.4} nm")]
    InterleaveConflict { offset_nm: f64, base_nm: f64 },
}

/// Piecewise-linear curve over wavelength (nm).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewiseLinear {
    points: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, PlanError> {
        if points.len() < 2 {
            return Err(PlanError::InvalidCurve("need at least two points".into()));
        }
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(PlanError::InvalidCurve("non-finite point".into()));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(PlanError::InvalidCurve(
                "abscissae must be strictly ascending".into(),
            ));
        }
        Ok(Self { points })
    }

    /// Straight line through two points.
    pub fn linear(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, PlanError> {
        Self::new(vec![(x0, y0), (x1, y1)])
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.points[0].0, self.points[self.points.len() - 1].0)
    }

    fn segment(&self, x: f64) -> Option<usize> {
        let (lo, hi) = self.domain();
        let slack = 1e-9 * hi.abs().max(1.0);
        if x < lo - slack || x > hi + slack || x.is_nan() {
            return None;
        }
        let idx = self.points.partition_point(|p| p.0 <= x);
        Some(idx.clamp(1, self.points.len() - 1) - 1)
    }

    pub fn eval(&self, x: f64) -> Option<f64> {
        let s = self.segment(x)?;
        let (x0, y0) = self.points[s];
        let (x1, y1) = self.points[s + 1];
        Some(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
    }

    pub fn slope_at(&self, x: f64) -> Option<f64> {
        let s = self.segment(x)?;
        let (x0, y0) = self.points[s];
        let (x1, y1) = self.points[s + 1];
        Some((y1 - y0) / (x1 - x0))
    }
}

/// Effective and group index of the silicon waveguide as functions of
/// wavelength. The two curves are independent data; neither is derived
/// from the other.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaterialModel {
    pub n_eff: PiecewiseLinear,
    pub n_g: PiecewiseLinear,
}

/// Band the material curves must cover (nm).
pub const MATERIAL_BAND_NM: (f64, f64) = (1180.0, 1550.0);
/// Upper end of the default curves; leaves room for the interleaved comb
/// above a 1550 nm anchor.
const DEFAULT_CURVE_END_NM: f64 = 1600.0;

impl MaterialModel {
    pub fn new(n_eff: PiecewiseLinear, n_g: PiecewiseLinear) -> Result<Self, PlanError> {
        let model = Self { n_eff, n_g };
        let (lo, hi) = model.domain();
        if lo > MATERIAL_BAND_NM.0 || hi < MATERIAL_BAND_NM.1 {
            return Err(PlanError::InvalidCurve(format!(
                "curves cover [{lo}, {hi}] nm, need at least [{}, {}] nm",
                MATERIAL_BAND_NM.0, MATERIAL_BAND_NM.1
            )));
        }
        // Both curves are piecewise linear, so checking every breakpoint of
        // either curve inside the common domain covers the whole domain.
        let mut xs: Vec<f64> = model
            .n_eff
            .points()
            .iter()
            .chain(model.n_g.points())
            .map(|p| p.0)
            .filter(|x| *x >= lo && *x <= hi)
            .collect();
        xs.push(lo);
        xs.push(hi);
        for x in xs {
            let ne = model.n_eff.eval(x).unwrap_or(f64::NAN);
            let ng = model.n_g.eval(x).unwrap_or(f64::NAN);
            if !(ne > 1.0 && ng > ne) {
                return Err(PlanError::InvalidCurve(format!(
                    "need n_g > n_eff > 1, got n_eff={ne}, n_g={ng} at {x} nm"
                )));
            }
        }
        Ok(model)
    }

    /// Silicon strip waveguide of the 45-nm monolithic process: n_eff falls
    /// 3.74 → 3.73 and n_g falls 5.02 → 4.98 across 1534.5–1550 nm, extended
    /// linearly over 1180–1600 nm.
    pub fn silicon_45nm() -> Self {
        let n_eff_slope = (4.98 - 3.73) / 1550.0;
        let n_g_slope = 0.08 / 31.0;
        let lo = MATERIAL_BAND_NM.0;
        let hi = DEFAULT_CURVE_END_NM;
        let line = |at_1550: f64, slope: f64| {
            PiecewiseLinear::linear(
                lo,
                at_1550 + slope * (1550.0 - lo),
                hi,
                at_1550 - slope * (hi - 1550.0),
            )
            .expect("static curve")
        };
        let n_eff = line(3.73, n_eff_slope);
        let n_g = line(4.98, n_g_slope);
        Self::new(n_eff, n_g).expect("static material is valid")
    }

    /// Common domain of both curves.
    pub fn domain(&self) -> (f64, f64) {
        let (a0, a1) = self.n_eff.domain();
        let (b0, b1) = self.n_g.domain();
        (a0.max(b0), a1.min(b1))
    }

    fn out_of_domain(&self, lambda_nm: f64) -> PlanError {
        let (lo, hi) = self.domain();
        PlanError::DomainExceeded { lambda_nm, lo, hi }
    }

    pub fn n_eff_at(&self, lambda_nm: f64) -> Result<f64, PlanError> {
        self.n_eff
            .eval(lambda_nm)
            .filter(|_| self.contains(lambda_nm))
            .ok_or_else(|| self.out_of_domain(lambda_nm))
    }

    pub fn n_g_at(&self, lambda_nm: f64) -> Result<f64, PlanError> {
        self.n_g
            .eval(lambda_nm)
            .filter(|_| self.contains(lambda_nm))
            .ok_or_else(|| self.out_of_domain(lambda_nm))
    }

    pub fn contains(&self, lambda_nm: f64) -> bool {
        let (lo, hi) = self.domain();
        let slack = 1e-9 * hi;
        lambda_nm >= lo - slack && lambda_nm <= hi + slack
    }

    /// Relative gap between the tabulated group index and the one implied by
    /// the n_eff slope, (n_g − (n_eff − λ·dn_eff/dλ)) / n_g.
    pub fn group_index_mismatch(&self, lambda_nm: f64) -> Result<f64, PlanError> {
        let ne = self.n_eff_at(lambda_nm)?;
        let ng = self.n_g_at(lambda_nm)?;
        let slope = self
            .n_eff
            .slope_at(lambda_nm)
            .ok_or_else(|| self.out_of_domain(lambda_nm))?;
        let implied = ne - lambda_nm * slope;
        Ok((ng - implied) / ng)
    }
}

impl Default for MaterialModel {
    fn default() -> Self {
        Self::silicon_45nm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlannerConfig {
    /// Number of WDM carriers (M).
    pub channels: usize,
    /// Longest carrier wavelength, fixed exactly by the plan (nm).
    pub lambda_max_nm: f64,
    /// Target carrier spacing (nm).
    pub spacing_target_nm: f64,
    /// Modulator ring quality factor.
    pub q_mrm: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            channels: 32,
            lambda_max_nm: 1550.0,
            spacing_target_nm: 0.5,
            q_mrm: 8000.0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self, mat: &MaterialModel) -> Result<(), PlanError> {
        if self.channels < 2 || !self.channels.is_power_of_two() {
            return Err(PlanError::InvalidConfig(format!(
                "channel count must be a power of two >= 2, got {}",
                self.channels
            )));
        }
        if !(self.spacing_target_nm > 0.0) || !self.spacing_target_nm.is_finite() {
            return Err(PlanError::InvalidConfig(format!(
                "spacing target must be positive, got {}",
                self.spacing_target_nm
            )));
        }
        if !(self.q_mrm > 0.0) {
            return Err(PlanError::InvalidConfig("q_mrm must be positive".into()));
        }
        if !mat.contains(self.lambda_max_nm) {
            return Err(mat.out_of_domain(self.lambda_max_nm));
        }
        Ok(())
    }
}

/// Complete spectral and geometric design of one MVM array.
///
/// Channel vectors are indexed by ascending wavelength. The modulator fields
/// stay empty until [`plan_mrm_radii`] fills them.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct WdmPlan {
    pub lambdas_nm: Vec<f64>,
    pub spacings_nm: Vec<f64>,
    pub rtr_modes: Vec<u64>,
    pub rtr_perimeter_um: f64,
    /// n_eff and n_g sampled at each carrier.
    pub n_eff: Vec<f64>,
    pub n_g: Vec<f64>,
    pub mrm_modes: Vec<u64>,
    pub mrm_radii_um: Vec<f64>,
    /// Per-channel ring radius bound from the FSR requirement.
    pub fsr_bounds_um: Vec<f64>,
    /// FSR radius bound at the longest carrier (the loosest of the per-channel bounds).
    pub fsr_bound_radius_um: Option<f64>,
    pub q_mrm: f64,
    /// Spacing the comb was planned for (nm); zero when unknown.
    pub spacing_target_nm: f64,
}

impl WdmPlan {
    pub fn channels(&self) -> usize {
        self.lambdas_nm.len()
    }

    pub fn has_mrm_design(&self) -> bool {
        !self.mrm_radii_um.is_empty() && self.mrm_radii_um.len() == self.channels()
    }

    /// Sum of the realized spacings (nm).
    pub fn total_span_nm(&self) -> f64 {
        self.spacings_nm.iter().sum()
    }

    /// Comb width the ring FSR must cover: M times the planned spacing,
    /// falling back to the realized span when no target is recorded.
    pub fn fsr_span_nm(&self) -> f64 {
        if self.spacing_target_nm > 0.0 {
            self.channels() as f64 * self.spacing_target_nm
        } else {
            self.total_span_nm()
        }
    }

    /// Local RTR free spectral range λ²/(n_g·L) at channel `j` (nm).
    pub fn local_fsr_nm(&self, j: usize) -> f64 {
        let l = self.lambdas_nm[j];
        l * l / (self.n_g[j] * self.rtr_perimeter_um * 1e3)
    }

    /// Racetrack straight-section length for a given end-cap radius (µm).
    pub fn rtr_straight_length_um(&self, end_radius_um: f64) -> f64 {
        (self.rtr_perimeter_um - 2.0 * PI * end_radius_um) / 2.0
    }

    /// Ring fabrication-error sensitivity (∝ 1/r) relative to `reference`.
    pub fn fabrication_error_scale(&self, reference: &WdmPlan) -> Option<f64> {
        if !self.has_mrm_design() || !reference.has_mrm_design() {
            return None;
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        Some(mean(&reference.mrm_radii_um) / mean(&self.mrm_radii_um))
    }

    /// Flat key-value export, one channel per line.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "channels={} rtr_perimeter_um={:.4} fsr_bound_radius_um={}\n",
            self.channels(),
            self.rtr_perimeter_um,
            self.fsr_bound_radius_um
                .map(|r| format!("{r:.4}"))
                .unwrap_or_else(|| "none".into())
        );
        for j in 0..self.channels() {
            let mrm_mode = self.mrm_modes.get(j).map(|m| m.to_string());
            let radius = self.mrm_radii_um.get(j).map(|r| format!("{r:.4}"));
            out.push_str(&format!(
                "channel={} lambda_nm={:.6} spacing_nm={:.6} rtr_mode={} mrm_mode={} mrm_radius_um={}\n",
                j,
                self.lambdas_nm[j],
                self.spacings_nm[j],
                self.rtr_modes[j],
                mrm_mode.as_deref().unwrap_or("none"),
                radius.as_deref().unwrap_or("none"),
            ));
        }
        out
    }
}

/// Solves λ = n_eff(λ)·perimeter/mode by fixed-point iteration.
fn solve_resonance(
    mat: &MaterialModel,
    perimeter_nm: f64,
    mode: u64,
    start_nm: f64,
) -> Result<f64, PlanError> {
    let ratio = perimeter_nm / mode as f64;
    let mut lambda = start_nm;
    let mut step = f64::INFINITY;
    for _ in 0..FIXED_POINT_MAX_ITERS {
        let next = mat.n_eff_at(lambda)? * ratio;
        step = (next - lambda).abs();
        lambda = next;
        if step < FIXED_POINT_TOL_NM {
            let residual = (lambda - mat.n_eff_at(lambda)? * ratio).abs();
            if residual < FIXED_POINT_TOL_NM {
                return Ok(lambda);
            }
        }
    }
    Err(PlanError::NonConvergence {
        mode,
        step_nm: step,
    })
}

/// Places the comb on consecutive modes of a single racetrack cavity.
///
/// The highest mode is the integer part of n_eff/n_g · λ_max/Δλ evaluated at
/// the anchor; the anchor carrier λ_max takes the lowest of the M modes, which
/// fixes the perimeter, and every shorter carrier is solved from the
/// resonance condition on that perimeter.
pub fn plan_rtr_spectrum(cfg: &PlannerConfig, mat: &MaterialModel) -> Result<WdmPlan, PlanError> {
    cfg.validate(mat)?;
    let m = cfg.channels;
    let l_max = cfg.lambda_max_nm;
    let ne_max = mat.n_eff_at(l_max)?;
    let ng_max = mat.n_g_at(l_max)?;
    let top_mode = (ne_max / ng_max * l_max / cfg.spacing_target_nm + 1e-9).floor();
    if top_mode < m as f64 {
        return Err(PlanError::InfeasiblePlan(format!(
            "only {top_mode} cavity modes available below {l_max} nm for {m} carriers"
        )));
    }
    let anchor_mode = top_mode as u64 - (m as u64 - 1);
    let perimeter_nm = l_max * anchor_mode as f64 / ne_max;

    // Solve from the anchor downwards so each solve starts next to its root.
    let mut lambdas = vec![0.0; m];
    let mut modes = vec![0u64; m];
    lambdas[m - 1] = l_max;
    modes[m - 1] = anchor_mode;
    for j in (0..m - 1).rev() {
        let mode = anchor_mode + (m - 1 - j) as u64;
        let start = lambdas[j + 1] * (mode - 1) as f64 / mode as f64;
        lambdas[j] = solve_resonance(mat, perimeter_nm, mode, start)?;
        modes[j] = mode;
    }

    let n_eff = lambdas
        .iter()
        .map(|&l| mat.n_eff_at(l))
        .collect::<Result<Vec<_>, _>>()?;
    let n_g = lambdas
        .iter()
        .map(|&l| mat.n_g_at(l))
        .collect::<Result<Vec<_>, _>>()?;
    let mut spacings: Vec<f64> = lambdas.windows(2).map(|w| w[1] - w[0]).collect();
    spacings.push(l_max * l_max / (n_g[m - 1] * perimeter_nm));

    Ok(WdmPlan {
        lambdas_nm: lambdas,
        spacings_nm: spacings,
        rtr_modes: modes,
        rtr_perimeter_um: perimeter_nm * 1e-3,
        n_eff,
        n_g,
        q_mrm: cfg.q_mrm,
        spacing_target_nm: cfg.spacing_target_nm,
        ..WdmPlan::default()
    })
}

/// Sizes one modulator ring per carrier: the largest resonant radius whose
/// FSR still spans the whole comb.
pub fn plan_mrm_radii(plan: &WdmPlan, mat: &MaterialModel) -> Result<WdmPlan, PlanError> {
    let m = plan.channels();
    if m == 0 {
        return Err(PlanError::InfeasiblePlan("plan has no carriers".into()));
    }
    let span = plan.fsr_span_nm();
    if !(span > 0.0) {
        return Err(PlanError::InfeasiblePlan("comb span must be positive".into()));
    }
    let mut out = plan.clone();
    out.mrm_modes.clear();
    out.mrm_radii_um.clear();
    out.fsr_bounds_um.clear();
    for &lambda in &plan.lambdas_nm {
        let ne = mat.n_eff_at(lambda)?;
        let ng = mat.n_g_at(lambda)?;
        let bound_nm = lambda * lambda / (ng * 2.0 * PI * span);
        let per_mode_nm = lambda / (2.0 * PI * ne);
        let mode = (bound_nm / per_mode_nm + 1e-12).floor();
        if mode < 1.0 {
            return Err(PlanError::InfeasiblePlan(format!(
                "no ring mode at {lambda:.3} nm fits the {bound_nm:.1} nm radius bound"
            )));
        }
        out.mrm_modes.push(mode as u64);
        out.mrm_radii_um.push(per_mode_nm * mode * 1e-3);
        out.fsr_bounds_um.push(bound_nm * 1e-3);
    }
    out.fsr_bound_radius_um = out.fsr_bounds_um.last().copied();
    Ok(out)
}

/// Runs both planning stages.
pub fn plan_wdm(cfg: &PlannerConfig, mat: &MaterialModel) -> Result<WdmPlan, PlanError> {
    plan_mrm_radii(&plan_rtr_spectrum(cfg, mat)?, mat)
}

/// Second comb for matrix addition, interleaved half a spacing above the
/// first and detected by a racetrack of twice the perimeter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MmaSpectrum {
    pub base_lambdas_nm: Vec<f64>,
    pub offset_lambdas_nm: Vec<f64>,
    /// Doubled-cavity modes of the base carriers (2·m_RTR,j).
    pub base_modes: Vec<u64>,
    /// Doubled-cavity modes of the offset carriers (2·m_RTR,j − 1).
    pub offset_modes: Vec<u64>,
    pub perimeter_um: f64,
    /// Largest resonance residual over all 2M carriers in the doubled cavity (nm).
    pub max_residual_nm: f64,
}

impl MmaSpectrum {
    pub fn channels(&self) -> usize {
        self.base_lambdas_nm.len()
    }

    /// Offset of each second-comb carrier above its partner (nm).
    pub fn offsets_nm(&self) -> Vec<f64> {
        self.offset_lambdas_nm
            .iter()
            .zip(&self.base_lambdas_nm)
            .map(|(o, b)| o - b)
            .collect()
    }
}

pub fn plan_mma_spectrum(plan: &WdmPlan, mat: &MaterialModel) -> Result<MmaSpectrum, PlanError> {
    let m = plan.channels();
    if m == 0 || plan.rtr_modes.len() != m {
        return Err(PlanError::InfeasiblePlan("base plan is incomplete".into()));
    }
    let perimeter_nm = 2.0 * plan.rtr_perimeter_um * 1e3;
    let residual = |lambda: f64, mode: u64| -> Result<f64, PlanError> {
        Ok((lambda - mat.n_eff_at(lambda)? * perimeter_nm / mode as f64).abs())
    };

    let mut offset_lambdas = Vec::with_capacity(m);
    let mut offset_modes = Vec::with_capacity(m);
    let mut base_modes = Vec::with_capacity(m);
    let mut max_residual: f64 = 0.0;
    for j in 0..m {
        let base_mode = 2 * plan.rtr_modes[j];
        let mode = base_mode - 1;
        let start = plan.lambdas_nm[j] + plan.spacings_nm[j] / 2.0;
        let lambda = solve_resonance(mat, perimeter_nm, mode, start)?;
        max_residual = max_residual
            .max(residual(plan.lambdas_nm[j], base_mode)?)
            .max(residual(lambda, mode)?);
        base_modes.push(base_mode);
        offset_modes.push(mode);
        offset_lambdas.push(lambda);
    }
    for (j, &offset) in offset_lambdas.iter().enumerate() {
        let guard = 0.1 * plan.spacings_nm[j] / 2.0;
        if let Some(&base) = plan
            .lambdas_nm
            .iter()
            .find(|&&base| (base - offset).abs() < guard)
        {
            return Err(PlanError::InterleaveConflict {
                offset_nm: offset,
                base_nm: base,
            });
        }
    }
    if max_residual > MMA_RESONANCE_TOL_NM {
        return Err(PlanError::InfeasiblePlan(format!(
            "doubled cavity misses a carrier by {max_residual:e} nm"
        )));
    }
    Ok(MmaSpectrum {
        base_lambdas_nm: plan.lambdas_nm.clone(),
        offset_lambdas_nm: offset_lambdas,
        base_modes,
        offset_modes,
        perimeter_um: 2.0 * plan.rtr_perimeter_um,
        max_residual_nm: max_residual,
    })
}

/// Residuals of every plan invariant. Never mutates the plan.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PlanReport {
    pub max_resonance_residual_nm: Option<f64>,
    pub min_spacing_nm: Option<f64>,
    /// Largest |local FSR − realized spacing| / realized spacing.
    pub max_fsr_spacing_deviation: Option<f64>,
    /// Per-channel FSR radius bound minus chosen radius (µm); negative is a violation.
    pub fsr_margins_um: Vec<f64>,
    pub missing: Vec<&'static str>,
    pub violations: Vec<String>,
}

impl PlanReport {
    pub fn is_ok(&self) -> bool {
        self.missing.is_empty() && self.violations.is_empty()
    }
}

pub fn validate_plan(plan: &WdmPlan) -> PlanReport {
    let mut report = PlanReport::default();
    let m = plan.channels();
    if m == 0 {
        report.missing.push("lambdas_nm");
    }
    for (name, len) in [
        ("spacings_nm", plan.spacings_nm.len()),
        ("rtr_modes", plan.rtr_modes.len()),
        ("n_eff", plan.n_eff.len()),
        ("n_g", plan.n_g.len()),
        ("mrm_modes", plan.mrm_modes.len()),
        ("mrm_radii_um", plan.mrm_radii_um.len()),
        ("fsr_bounds_um", plan.fsr_bounds_um.len()),
    ] {
        if len == 0 || len != m {
            report.missing.push(name);
        }
    }
    if !(plan.rtr_perimeter_um > 0.0) {
        report.missing.push("rtr_perimeter_um");
    }
    if plan.fsr_bound_radius_um.is_none() {
        report.missing.push("fsr_bound_radius_um");
    }
    let has = |name: &str| !report.missing.contains(&name);

    if m > 0 && has("rtr_modes") && has("n_eff") && has("rtr_perimeter_um") {
        let perimeter_nm = plan.rtr_perimeter_um * 1e3;
        let worst = (0..m)
            .map(|j| {
                (plan.lambdas_nm[j] - plan.n_eff[j] * perimeter_nm / plan.rtr_modes[j] as f64).abs()
            })
            .fold(0.0, f64::max);
        report.max_resonance_residual_nm = Some(worst);
        if worst >= RESONANCE_TOL_NM {
            report
                .violations
                .push(format!("resonance residual {worst:e} nm exceeds {RESONANCE_TOL_NM:e} nm"));
        }
        if plan.rtr_modes.windows(2).any(|w| w[0] != w[1] + 1) {
            report
                .violations
                .push("racetrack modes are not consecutive descending integers".into());
        }
    }
    if m > 0 && has("spacings_nm") {
        let min = plan.spacings_nm.iter().copied().fold(f64::INFINITY, f64::min);
        report.min_spacing_nm = Some(min);
        if !(min > 0.0) {
            report.violations.push(format!("non-positive spacing {min}"));
        }
        if has("n_g") && has("rtr_perimeter_um") {
            let dev = (0..m)
                .map(|j| ((plan.local_fsr_nm(j) - plan.spacings_nm[j]) / plan.spacings_nm[j]).abs())
                .fold(0.0, f64::max);
            report.max_fsr_spacing_deviation = Some(dev);
        }
    }
    if m > 0 && has("mrm_radii_um") && has("fsr_bounds_um") {
        report.fsr_margins_um = plan
            .fsr_bounds_um
            .iter()
            .zip(&plan.mrm_radii_um)
            .map(|(b, r)| b - r)
            .collect();
        for (j, margin) in report.fsr_margins_um.iter().enumerate() {
            if *margin < 0.0 {
                report.violations.push(format!(
                    "channel {j}: ring radius exceeds FSR bound by {:.4} µm",
                    -margin
                ));
            }
        }
        if let Some(global) = plan.fsr_bound_radius_um {
            if let Some(j) = plan.mrm_radii_um.iter().position(|r| *r > global) {
                report
                    .violations
                    .push(format!("channel {j}: ring radius exceeds global FSR bound"));
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(channels: usize, spacing: f64) -> WdmPlan {
        let cfg = PlannerConfig {
            channels,
            spacing_target_nm: spacing,
            ..PlannerConfig::default()
        };
        plan_wdm(&cfg, &MaterialModel::default()).unwrap()
    }

    #[test]
    fn default_material_prints_as_the_tabulated_endpoints() {
        let mat = MaterialModel::default();
        let r2 = |x: f64| (x * 100.0).round() / 100.0;
        assert_eq!(r2(mat.n_eff_at(1534.5).unwrap()), 3.74);
        assert_eq!(r2(mat.n_eff_at(1550.0).unwrap()), 3.73);
        assert_eq!(r2(mat.n_g_at(1534.5).unwrap()), 5.02);
        assert_eq!(r2(mat.n_g_at(1519.0).unwrap()), 5.06);
        assert!(mat.group_index_mismatch(1550.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn material_rejects_short_domain_and_bad_ordering() {
        let short = PiecewiseLinear::linear(1500.0, 3.8, 1550.0, 3.7).unwrap();
        let ng = PiecewiseLinear::linear(1180.0, 5.0, 1550.0, 4.9).unwrap();
        assert!(MaterialModel::new(short, ng.clone()).is_err());
        let inverted = PiecewiseLinear::linear(1180.0, 5.5, 1550.0, 5.5).unwrap();
        assert!(MaterialModel::new(inverted, ng).is_err());
        assert!(PiecewiseLinear::new(vec![(2.0, 1.0), (1.0, 1.0)]).is_err());
    }

    #[test]
    fn table_row_one() {
        let plan = row(32, 0.5);
        assert!((plan.rtr_perimeter_um - 951.32).abs() / 951.32 < 0.01);
        assert_eq!(plan.rtr_modes[0], 2321);
        assert_eq!(plan.rtr_modes[31], 2290);
        assert_eq!(plan.lambdas_nm[31], 1550.0);
        assert!((plan.lambdas_nm[0] - 1534.5).abs() < 0.2);
        for s in &plan.spacings_nm {
            assert!((0.485..=0.515).contains(s), "spacing {s}");
        }
        assert!(plan.mrm_modes.iter().all(|m| *m == 71 || *m == 72));
        let rmin = plan.mrm_radii_um.iter().copied().fold(f64::INFINITY, f64::min);
        let rmax = plan.mrm_radii_um.iter().copied().fold(0.0, f64::max);
        assert!((rmin - 4.63).abs() < 0.02, "{rmin}");
        assert!((rmax - 4.76).abs() < 0.02, "{rmax}");
        assert!(validate_plan(&plan).is_ok());
    }

    #[test]
    fn fsr_bound_matches_direct_evaluation() {
        // λ = 1550 nm, n_g = 4.98, comb span ≈ 16 nm.
        let direct = 1550.0f64.powi(2) / (4.98 * 2.0 * PI * 16.0) * 1e-3;
        let plan = row(32, 0.5);
        let bound = plan.fsr_bound_radius_um.unwrap();
        assert!((direct - 4.80).abs() < 0.005);
        assert!((bound - direct).abs() / direct < 0.01, "{bound} vs {direct}");
    }

    #[test]
    fn table_rows_two_and_three() {
        let r2 = row(32, 1.0);
        assert!((r2.rtr_perimeter_um - 469.01).abs() / 469.01 < 0.01);
        assert_eq!((r2.rtr_modes[0], r2.rtr_modes[31]), (1160, 1129));
        assert!(r2.mrm_modes.iter().all(|m| *m == 35 || *m == 36));
        let rmin = r2.mrm_radii_um.iter().copied().fold(f64::INFINITY, f64::min);
        let rmax = r2.mrm_radii_um.iter().copied().fold(0.0, f64::max);
        assert!((rmin - 2.25).abs() < 0.03 && (rmax - 2.38).abs() < 0.03);

        let r3 = row(16, 1.0);
        assert!((r3.rtr_perimeter_um - 475.66).abs() / 475.66 < 0.01);
        assert_eq!((r3.rtr_modes[0], r3.rtr_modes[15]), (1160, 1145));
        assert!(r3.mrm_modes.iter().all(|m| *m == 71 || *m == 72));
    }

    #[test]
    fn error_scale_doubles_when_rings_halve() {
        let r1 = row(32, 0.5);
        let r2 = row(32, 1.0);
        let scale = r2.fabrication_error_scale(&r1).unwrap();
        assert!((scale - 2.0).abs() < 0.1, "{scale}");
        assert_eq!(r1.fabrication_error_scale(&r1), Some(1.0));
    }

    #[test]
    fn minimal_two_channel_plan() {
        let plan = row(2, 0.5);
        assert_eq!(plan.channels(), 2);
        assert_eq!(plan.rtr_modes[0], plan.rtr_modes[1] + 1);
        assert!(validate_plan(&plan).max_resonance_residual_nm.unwrap() < RESONANCE_TOL_NM);
    }

    #[test]
    fn config_errors() {
        let mat = MaterialModel::default();
        for cfg in [
            PlannerConfig { channels: 12, ..Default::default() },
            PlannerConfig { channels: 1, ..Default::default() },
            PlannerConfig { spacing_target_nm: 0.0, ..Default::default() },
            PlannerConfig { lambda_max_nm: 1700.0, ..Default::default() },
        ] {
            assert!(plan_rtr_spectrum(&cfg, &mat).is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn comb_leaving_the_domain_is_reported() {
        let cfg = PlannerConfig {
            channels: 256,
            lambda_max_nm: 1190.0,
            spacing_target_nm: 0.5,
            ..Default::default()
        };
        let err = plan_rtr_spectrum(&cfg, &MaterialModel::default()).unwrap_err();
        assert!(matches!(err, PlanError::DomainExceeded { .. }), "{err:?}");
    }

    #[test]
    fn validate_flags_radius_over_bound_and_empty_plan() {
        let mut plan = row(32, 0.5);
        plan.mrm_radii_um[3] = plan.fsr_bounds_um[3] + 0.1;
        let report = validate_plan(&plan);
        assert!(report.fsr_margins_um[3] < 0.0);
        assert!(!report.is_ok());

        let empty = validate_plan(&WdmPlan::default());
        assert!(empty.missing.contains(&"lambdas_nm"));
        assert!(empty.missing.contains(&"mrm_radii_um"));
        assert!(empty.missing.contains(&"rtr_perimeter_um"));
    }

    #[test]
    fn mma_spectrum_interleaves() {
        let plan = row(32, 0.5);
        let mma = plan_mma_spectrum(&plan, &MaterialModel::default()).unwrap();
        assert!((mma.perimeter_um - 2.0 * plan.rtr_perimeter_um).abs() < 1e-9);
        assert!((mma.perimeter_um - 1902.64).abs() / 1902.64 < 0.01);
        for (j, off) in mma.offsets_nm().iter().enumerate() {
            assert!((off - plan.spacings_nm[j] / 2.0).abs() < 0.01, "{j}: {off}");
        }
        assert!(mma.max_residual_nm < MMA_RESONANCE_TOL_NM);

        let small = row(2, 0.5);
        let mma = plan_mma_spectrum(&small, &MaterialModel::default()).unwrap();
        let l = &small.lambdas_nm;
        assert!(l[0] < mma.offset_lambdas_nm[0] && mma.offset_lambdas_nm[0] < l[1]);
    }

    #[test]
    fn mma_rejects_colliding_comb() {
        let mut plan = row(4, 0.5);
        let mat = MaterialModel::default();
        let offset = plan_mma_spectrum(&plan, &mat).unwrap().offset_lambdas_nm[0];
        plan.lambdas_nm[1] = offset + 1e-3;
        let err = plan_mma_spectrum(&plan, &MaterialModel::default()).unwrap_err();
        assert!(matches!(err, PlanError::InterleaveConflict { .. }), "{err:?}");
    }

    #[test]
    fn text_export_has_one_line_per_channel() {
        let plan = row(16, 1.0);
        let text = plan.to_text();
        assert_eq!(text.lines().count(), 17);
        assert!(text.lines().nth(1).unwrap().starts_with("channel=0 lambda_nm="));
    }
}
