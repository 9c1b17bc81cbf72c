//! PDE data for `-div(D grad u) + b(x, u) = f` with piecewise constant `D`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::mesh::{Geometry, Point, Region};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("unknown problem `{0}`")]
    UnknownProblem(String),
    #[error("unknown parameter `{param}` for problem `{problem}`")]
    UnknownParameter { problem: String, param: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no finite barrier: {0}")]
    NoFiniteBarrier(String),
    #[error("barriers are not available for measure-valued data ({0})")]
    UnboundedSource(&'static str),
}

/// Evaluation site of a coefficient: the point and the subdomain it belongs to.
/// The region disambiguates points lying on the interface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Site {
    pub point: Point,
    pub region: Region,
}

pub type ScalarField = Arc<dyn Fn(Site) -> f64 + Send + Sync>;
pub type BoundaryField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

/// Diffusion coefficient, constant on each region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Diffusion([f64; 2]);

impl Diffusion {
    pub fn new(region_one: f64, region_two: f64) -> Self {
        assert!(region_one > 0.0 && region_two > 0.0, "diffusion must be positive");
        Diffusion([region_one, region_two])
    }

    pub fn uniform(d: f64) -> Self {
        Diffusion::new(d, d)
    }

    pub fn get(&self, region: Region) -> f64 {
        self.0[region.index()]
    }

    /// Ellipticity constant `m`.
    pub fn min(&self) -> f64 {
        self.0[0].min(self.0[1])
    }

    /// Continuity constant `M`.
    pub fn max(&self) -> f64 {
        self.0[0].max(self.0[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GrowthClass {
    Subcritical,
    Critical,
    Supercritical,
}

/// Zeroth-order term `b(x, xi)` with its first two derivatives in `xi`.
///
/// `barrier_alpha <= barrier_beta` are sign-change constants:
/// `b(x, xi) >= 0` for `xi >= beta` and `b(x, xi) <= 0` for `xi <= alpha`.
pub trait Nonlinearity: Send + Sync {
    fn eval(&self, site: Site, xi: f64) -> f64;
    fn d1(&self, site: Site, xi: f64) -> f64;
    fn d2(&self, site: Site, xi: f64) -> f64;
    fn barrier_alpha(&self) -> f64;
    fn barrier_beta(&self) -> f64;
    fn growth_class(&self) -> GrowthClass;

    /// `(inf_x b(x, xi), sup_x b(x, xi))`.
    ///
    /// The default assumes `b` depends on `x` only through the region;
    /// nonlinearities with genuine spatial variation must override it.
    fn envelope(&self, xi: f64) -> (f64, f64) {
        let at = |region| self.eval(Site { point: [0.0, 0.0], region }, xi);
        let (a, b) = (at(Region::One), at(Region::Two));
        (a.min(b), a.max(b))
    }
}

/// `b = c_r * xi^p` with odd `p` and `c_r >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLaw {
    pub exponent: i32,
    pub coeff: [f64; 2],
}

impl Nonlinearity for PowerLaw {
    fn eval(&self, site: Site, xi: f64) -> f64 {
        self.coeff[site.region.index()] * xi.powi(self.exponent)
    }
    fn d1(&self, site: Site, xi: f64) -> f64 {
        let p = self.exponent;
        self.coeff[site.region.index()] * p as f64 * xi.powi(p - 1)
    }
    fn d2(&self, site: Site, xi: f64) -> f64 {
        let p = self.exponent;
        if p < 2 {
            return 0.0;
        }
        self.coeff[site.region.index()] * (p * (p - 1)) as f64 * xi.powi(p - 2)
    }
    fn barrier_alpha(&self) -> f64 {
        0.0
    }
    fn barrier_beta(&self) -> f64 {
        0.0
    }
    fn growth_class(&self) -> GrowthClass {
        // polynomial growth is subcritical in 2D for every exponent
        GrowthClass::Subcritical
    }
}

/// `b = kappa2_r * sinh(xi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinhReaction {
    pub kappa2: [f64; 2],
}

impl Nonlinearity for SinhReaction {
    fn eval(&self, site: Site, xi: f64) -> f64 {
        self.kappa2[site.region.index()] * xi.sinh()
    }
    fn d1(&self, site: Site, xi: f64) -> f64 {
        self.kappa2[site.region.index()] * xi.cosh()
    }
    fn d2(&self, site: Site, xi: f64) -> f64 {
        self.kappa2[site.region.index()] * xi.sinh()
    }
    fn barrier_alpha(&self) -> f64 {
        0.0
    }
    fn barrier_beta(&self) -> f64 {
        0.0
    }
    fn growth_class(&self) -> GrowthClass {
        GrowthClass::Supercritical
    }
}

/// `b = c_r * xi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearReaction {
    pub c: [f64; 2],
}

impl Nonlinearity for LinearReaction {
    fn eval(&self, site: Site, xi: f64) -> f64 {
        self.c[site.region.index()] * xi
    }
    fn d1(&self, site: Site, _xi: f64) -> f64 {
        self.c[site.region.index()]
    }
    fn d2(&self, _site: Site, _xi: f64) -> f64 {
        0.0
    }
    fn barrier_alpha(&self) -> f64 {
        0.0
    }
    fn barrier_beta(&self) -> f64 {
        0.0
    }
    fn growth_class(&self) -> GrowthClass {
        GrowthClass::Subcritical
    }
}

/// Volume source `f` with the caller-supplied bounds `inf f` and `sup f`.
#[derive(Clone)]
pub struct VolumeSource {
    pub f: ScalarField,
    pub lower: f64,
    pub upper: f64,
}

impl VolumeSource {
    pub fn constant(value: f64) -> Self {
        VolumeSource { f: Arc::new(move |_| value), lower: value, upper: value }
    }

    /// Source known only through `|f| <= bound`.
    pub fn bounded(f: ScalarField, bound: f64) -> Self {
        VolumeSource { f, lower: -bound, upper: bound }
    }
}

/// Nodal delta load `magnitude * delta_location`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointSource {
    pub location: Point,
    pub magnitude: f64,
}

/// Dirichlet data with its bounds on the boundary.
#[derive(Clone)]
pub struct Dirichlet {
    pub g: BoundaryField,
    pub lower: f64,
    pub upper: f64,
}

impl Dirichlet {
    pub fn constant(value: f64) -> Self {
        Dirichlet { g: Arc::new(move |_| value), lower: value, upper: value }
    }

    pub fn zero() -> Self {
        Dirichlet::constant(0.0)
    }
}

#[derive(Clone)]
pub struct Problem {
    pub name: String,
    pub geometry: Geometry,
    pub diffusion: Diffusion,
    pub nonlinearity: Arc<dyn Nonlinearity>,
    pub volume_source: Option<VolumeSource>,
    pub point_source: Option<PointSource>,
    /// Flux jump `[D du/dn] = g` on the interface, entering as `(g, v)_Gamma`.
    pub interface_flux: Option<BoundaryField>,
    pub dirichlet: Dirichlet,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("name", &self.name)
            .field("geometry", &self.geometry)
            .field("diffusion", &self.diffusion)
            .field("point_source", &self.point_source)
            .field("has_volume_source", &self.volume_source.is_some())
            .field("has_interface_flux", &self.interface_flux.is_some())
            .finish()
    }
}

impl Problem {
    /// Problem with zero data everywhere except `b`.
    pub fn new(name: impl Into<String>, geometry: Geometry, diffusion: Diffusion, nonlinearity: Arc<dyn Nonlinearity>) -> Self {
        Problem {
            name: name.into(),
            geometry,
            diffusion,
            nonlinearity,
            volume_source: None,
            point_source: None,
            interface_flux: None,
            dirichlet: Dirichlet::zero(),
        }
    }

    pub fn with_volume_source(mut self, source: VolumeSource) -> Self {
        self.volume_source = Some(source);
        self
    }

    pub fn with_point_source(mut self, source: PointSource) -> Self {
        self.point_source = Some(source);
        self
    }

    pub fn with_interface_flux(mut self, g: BoundaryField) -> Self {
        self.interface_flux = Some(g);
        self
    }

    pub fn with_dirichlet(mut self, dirichlet: Dirichlet) -> Self {
        self.dirichlet = dirichlet;
        self
    }
}

/// Lower and upper `L^inf` barriers of every solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Barriers {
    pub lower: f64,
    pub upper: f64,
}

const BARRIER_SEARCH_LIMIT: f64 = 1e12;

/// Barriers `upper = max(beta~, sup g)`, `lower = min(alpha~, inf g)` where
/// `alpha~, beta~` are sign-change constants of `b(x, xi) - f(x)`.
///
/// The search for `alpha~, beta~` assumes the envelope of `b` is monotone
/// outside `[alpha, beta]`, which holds for all built-in nonlinearities.
pub fn compute_barriers(problem: &Problem) -> Result<Barriers, ProblemError> {
    if problem.point_source.is_some() {
        return Err(ProblemError::UnboundedSource("point source"));
    }
    if problem.interface_flux.is_some() {
        return Err(ProblemError::UnboundedSource("interface flux"));
    }
    let b = problem.nonlinearity.as_ref();
    let (f_lo, f_hi) = problem.volume_source.as_ref().map_or((0.0, 0.0), |s| (s.lower, s.upper));

    let beta = search_barrier(b.barrier_beta(), 1.0, |xi| b.envelope(xi).0 >= f_hi).ok_or_else(|| {
        ProblemError::NoFiniteBarrier(format!("inf_x b(x, xi) never reaches sup f = {f_hi}"))
    })?;
    let alpha = search_barrier(b.barrier_alpha(), -1.0, |xi| b.envelope(xi).1 <= f_lo).ok_or_else(|| {
        ProblemError::NoFiniteBarrier(format!("sup_x b(x, xi) never drops to inf f = {f_lo}"))
    })?;
    Ok(Barriers {
        lower: alpha.min(problem.dirichlet.lower),
        upper: beta.max(problem.dirichlet.upper),
    })
}

/// Smallest `|xi - start|` along `direction` at which `holds` becomes true,
/// resolved by bisection and rounded outward so the returned point satisfies it.
fn search_barrier(start: f64, direction: f64, holds: impl Fn(f64) -> bool) -> Option<f64> {
    if holds(start) {
        return Some(start);
    }
    let mut step = 1.0;
    let mut inside = start;
    let mut outside = start + direction * step;
    while !holds(outside) {
        inside = outside;
        step *= 2.0;
        outside = start + direction * step;
        if step > BARRIER_SEARCH_LIMIT {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (inside + outside);
        if mid == inside || mid == outside {
            break;
        }
        if holds(mid) {
            outside = mid;
        } else {
            inside = mid;
        }
    }
    Some(outside)
}

pub type ProblemParams = BTreeMap<String, f64>;

fn take(params: &mut ProblemParams, key: &str, default: f64) -> f64 {
    params.remove(key).unwrap_or(default)
}

fn finish(problem: &str, params: ProblemParams) -> Result<(), ProblemError> {
    match params.into_keys().next() {
        Some(param) => Err(ProblemError::UnknownParameter { problem: problem.into(), param }),
        None => Ok(()),
    }
}

fn positive(name: &str, v: f64) -> Result<f64, ProblemError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ProblemError::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

fn nonnegative(name: &str, v: f64) -> Result<f64, ProblemError> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ProblemError::InvalidParameter(format!("{name} must be nonnegative, got {v}")))
    }
}

/// Built-in problems on `(-1,1)^2` with interface box `(-1/2,1/2)^2`.
///
/// | name | b | data | parameters (defaults) |
/// |---|---|---|---|
/// | `power11` | `xi^11` | `load * delta_0` | `d1 = 1000, d2 = 1, load = 1000` |
/// | `power` | `coeff * xi^p`, odd `p` | constant `f` | `p = 3, coeff = 1, f = 8, d1 = d2 = 1` |
/// | `sinh_pbe` | `kappa2 * sinh(xi)` in region 2 | interface flux, constant `g` | `d1 = 2, d2 = 80, kappa2 = 1, flux = 1, g = 0` |
/// | `linear_reaction` | `c * xi` | constant `f` | `d1 = 1000, d2 = 1, c = 1, f = 1` |
/// | `zero_reaction` | `0` | constant `f` | `d1 = 1000, d2 = 1, f = 1` |
pub fn builtin_problem(name: &str, params: &ProblemParams) -> Result<Problem, ProblemError> {
    let mut p = params.clone();
    let geometry = Geometry::centered_box();
    let problem = match name {
        "power11" => {
            let d = Diffusion::new(positive("d1", take(&mut p, "d1", 1000.0))?, positive("d2", take(&mut p, "d2", 1.0))?);
            let load = take(&mut p, "load", 1000.0);
            Problem::new(name, geometry, d, Arc::new(PowerLaw { exponent: 11, coeff: [1.0; 2] }))
                .with_point_source(PointSource { location: [0.0, 0.0], magnitude: load })
        }
        "power" => {
            let d = Diffusion::new(positive("d1", take(&mut p, "d1", 1.0))?, positive("d2", take(&mut p, "d2", 1.0))?);
            let exponent = take(&mut p, "p", 3.0);
            if exponent < 1.0 || exponent.fract() != 0.0 || exponent as i32 % 2 == 0 {
                return Err(ProblemError::InvalidParameter(format!("p must be an odd positive integer, got {exponent}")));
            }
            let coeff = nonnegative("coeff", take(&mut p, "coeff", 1.0))?;
            let f = take(&mut p, "f", 8.0);
            Problem::new(name, geometry, d, Arc::new(PowerLaw { exponent: exponent as i32, coeff: [coeff; 2] }))
                .with_volume_source(VolumeSource::constant(f))
        }
        "sinh_pbe" => {
            let d = Diffusion::new(positive("d1", take(&mut p, "d1", 2.0))?, positive("d2", take(&mut p, "d2", 80.0))?);
            let kappa2 = nonnegative("kappa2", take(&mut p, "kappa2", 1.0))?;
            let flux = take(&mut p, "flux", 1.0);
            let g = take(&mut p, "g", 0.0);
            let mut problem = Problem::new(name, geometry, d, Arc::new(SinhReaction { kappa2: [0.0, kappa2] }))
                .with_dirichlet(Dirichlet::constant(g));
            if flux != 0.0 {
                problem = problem.with_interface_flux(Arc::new(move |_| flux));
            }
            problem
        }
        "linear_reaction" => {
            let d = Diffusion::new(positive("d1", take(&mut p, "d1", 1000.0))?, positive("d2", take(&mut p, "d2", 1.0))?);
            let c = nonnegative("c", take(&mut p, "c", 1.0))?;
            let f = take(&mut p, "f", 1.0);
            Problem::new(name, geometry, d, Arc::new(LinearReaction { c: [c; 2] })).with_volume_source(VolumeSource::constant(f))
        }
        "zero_reaction" => {
            let d = Diffusion::new(positive("d1", take(&mut p, "d1", 1000.0))?, positive("d2", take(&mut p, "d2", 1.0))?);
            let f = take(&mut p, "f", 1.0);
            Problem::new(name, geometry, d, Arc::new(LinearReaction { c: [0.0; 2] })).with_volume_source(VolumeSource::constant(f))
        }
        _ => return Err(ProblemError::UnknownProblem(name.into())),
    };
    finish(name, p)?;
    Ok(problem)
}

/// Closed-form solution of an interface problem with its data.
#[derive(Clone)]
pub struct ManufacturedSolution {
    pub exact: ScalarField,
    pub exact_grad: Arc<dyn Fn(Site) -> [f64; 2] + Send + Sync>,
    pub source: ScalarField,
    /// Sobolev regularity on each subdomain.
    pub regularity_s: f64,
    /// `|[u]|` at the interface, checked at construction.
    pub continuity_residual: f64,
    /// `|[D du/dn]|` at the interface, checked at construction.
    pub flux_residual: f64,
}

/// Profile `w_r(x) = cos(pi x / 2) + sin(pi x) / D_r` and its first two derivatives.
fn profile(d: f64, x: f64) -> (f64, f64, f64) {
    let (s, c) = (PI * x).sin_cos();
    let (sh, ch) = (0.5 * PI * x).sin_cos();
    (ch + s / d, -0.5 * PI * sh + PI * c / d, -0.25 * PI * PI * ch - PI * PI * s / d)
}

const INTERFACE_TOL: f64 = 1e-12;

/// `u = w_r(x) sin(pi y)` on `(-1,1)^2` split at `x = 0`, region 1 on the left,
/// with `b(u) = u^3`.
///
/// `w_r` is continuous at 0 with `D_r w_r'(0) = pi` on both sides and vanishes
/// at `x = +-1`, so `u` satisfies both jump conditions and `u = 0` on the boundary.
pub fn manufactured_interface_problem(d1: f64, d2: f64) -> Result<(Problem, ManufacturedSolution), ProblemError> {
    let diffusion = Diffusion::new(positive("d1", d1)?, positive("d2", d2)?);
    let dr = move |site: Site| diffusion.get(site.region);

    let exact: ScalarField = Arc::new(move |s: Site| profile(dr(s), s.point[0]).0 * (PI * s.point[1]).sin());
    let exact_grad = Arc::new(move |s: Site| {
        let (w, dw, _) = profile(dr(s), s.point[0]);
        let (sy, cy) = (PI * s.point[1]).sin_cos();
        [dw * sy, PI * w * cy]
    });
    let source: ScalarField = Arc::new(move |s: Site| {
        let d = dr(s);
        let (w, _, ddw) = profile(d, s.point[0]);
        let sy = (PI * s.point[1]).sin();
        let u = w * sy;
        -d * ddw * sy + d * PI * PI * w * sy + u * u * u
    });

    let (w1, dw1, _) = profile(d1, 0.0);
    let (w2, dw2, _) = profile(d2, 0.0);
    let continuity_residual = (w1 - w2).abs();
    let flux_residual = (d1 * dw1 - d2 * dw2).abs();
    if continuity_residual >= INTERFACE_TOL || flux_residual >= INTERFACE_TOL {
        return Err(ProblemError::InvalidParameter(format!(
            "manufactured solution violates the jump conditions ({continuity_residual:e}, {flux_residual:e})"
        )));
    }

    // |w| <= 1 + 1/m, |D w''| <= D pi^2/4 + pi^2, so
    // |f| <= M pi^2 / 4 + pi^2 + M pi^2 (1 + 1/m) + (1 + 1/m)^3.
    let (m, big_m) = (diffusion.min(), diffusion.max());
    let amp = 1.0 + 1.0 / m;
    let bound = big_m * PI * PI / 4.0 + PI * PI + big_m * PI * PI * amp + amp.powi(3);

    let problem = Problem::new(
        "manufactured",
        Geometry::vertical_split(),
        diffusion,
        Arc::new(PowerLaw { exponent: 3, coeff: [1.0; 2] }),
    )
    .with_volume_source(VolumeSource::bounded(Arc::clone(&source), bound));
    let solution = ManufacturedSolution {
        exact,
        exact_grad,
        source,
        regularity_s: 2.0,
        continuity_residual,
        flux_residual,
    };
    Ok((problem, solution))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn site(x: f64, y: f64, region: Region) -> Site {
        Site { point: [x, y], region }
    }

    fn builtin(name: &str) -> Problem {
        builtin_problem(name, &ProblemParams::new()).unwrap()
    }

    fn params(kv: &[(&str, f64)]) -> ProblemParams {
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let nonlinearities: Vec<Arc<dyn Nonlinearity>> = vec![
            builtin("power11").nonlinearity,
            builtin("power").nonlinearity,
            builtin("sinh_pbe").nonlinearity,
            builtin("linear_reaction").nonlinearity,
            builtin("zero_reaction").nonlinearity,
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for b in &nonlinearities {
            for _ in 0..1000 {
                let region = if rng.gen_bool(0.5) { Region::One } else { Region::Two };
                let s = site(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), region);
                let xi: f64 = rng.gen_range(-3.0..3.0);
                let eps = 1e-5 * xi.abs().max(1.0);
                let fd1 = (b.eval(s, xi + eps) - b.eval(s, xi - eps)) / (2.0 * eps);
                let fd2 = (b.d1(s, xi + eps) - b.d1(s, xi - eps)) / (2.0 * eps);
                let scale1 = b.d1(s, xi).abs().max(1e-300);
                let scale2 = b.d2(s, xi).abs().max(1e-300);
                // absolute floor: finite differences cannot resolve exact zeros
                assert!((fd1 - b.d1(s, xi)).abs() <= 1e-6 * scale1 + 1e-8, "d1 at {xi}");
                assert!((fd2 - b.d2(s, xi)).abs() <= 1e-6 * scale2 + 1e-8, "d2 at {xi}");
            }
        }
    }

    #[test]
    fn sign_property_by_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for name in ["power11", "power", "sinh_pbe", "linear_reaction", "zero_reaction"] {
            let b = builtin(name).nonlinearity;
            for _ in 0..500 {
                let region = if rng.gen_bool(0.5) { Region::One } else { Region::Two };
                let s = site(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), region);
                let up = b.barrier_beta() + rng.gen_range(0.0..3.0);
                let down = b.barrier_alpha() - rng.gen_range(0.0..3.0);
                assert!(b.eval(s, up) >= 0.0, "{name}");
                assert!(b.eval(s, down) <= 0.0, "{name}");
            }
        }
    }

    #[test]
    fn barriers_cubic_with_constant_source() {
        let p = builtin_problem("power", &params(&[("p", 3.0), ("f", 8.0)])).unwrap();
        let b = compute_barriers(&p).unwrap();
        assert_eq!(b.lower, 0.0);
        assert!((b.upper - 2.0).abs() < 1e-12 && b.upper >= 2.0);
    }

    #[test]
    fn barriers_sinh_without_source() {
        let p = builtin_problem("sinh_pbe", &params(&[("flux", 0.0)])).unwrap();
        assert_eq!(compute_barriers(&p).unwrap(), Barriers { lower: 0.0, upper: 0.0 });
        let p = builtin_problem("sinh_pbe", &params(&[("flux", 0.0), ("g", 2.0)])).unwrap();
        assert_eq!(compute_barriers(&p).unwrap(), Barriers { lower: 0.0, upper: 2.0 });
    }

    #[test]
    fn barriers_power11_bounded_source() {
        let p = Problem::new(
            "power11-bounded",
            Geometry::centered_box(),
            Diffusion::new(1000.0, 1.0),
            Arc::new(PowerLaw { exponent: 11, coeff: [1.0; 2] }),
        )
        .with_volume_source(VolumeSource::bounded(Arc::new(|_| 1000.0), 1000.0));
        let b = compute_barriers(&p).unwrap();
        let root = 1000f64.powf(1.0 / 11.0);
        assert!((root - 1.8738).abs() < 1e-4);
        assert!((b.upper - root).abs() < 1e-12);
        assert!((b.lower + root).abs() < 1e-12);
    }

    #[test]
    fn barriers_bracket_folded_nonlinearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (name, kv) in [
            ("power", vec![("p", 3.0), ("f", 8.0)]),
            ("power", vec![("p", 5.0), ("f", -3.0), ("coeff", 2.0)]),
            ("linear_reaction", vec![("c", 10.0), ("f", 4.0)]),
        ] {
            let p = builtin_problem(name, &params(&kv)).unwrap();
            let b = compute_barriers(&p).unwrap();
            let src = p.volume_source.as_ref().unwrap();
            for _ in 0..100 {
                let region = if rng.gen_bool(0.5) { Region::One } else { Region::Two };
                let s = site(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), region);
                let f = (src.f)(s);
                assert!(p.nonlinearity.eval(s, b.upper) - f >= -1e-12);
                assert!(p.nonlinearity.eval(s, b.lower) - f <= 1e-12);
            }
        }
    }

    #[test]
    fn barrier_errors() {
        let p = builtin("zero_reaction");
        assert!(matches!(compute_barriers(&p), Err(ProblemError::NoFiniteBarrier(_))));
        assert!(matches!(compute_barriers(&builtin("power11")), Err(ProblemError::UnboundedSource(_))));
        assert!(matches!(compute_barriers(&builtin("sinh_pbe")), Err(ProblemError::UnboundedSource(_))));
    }

    #[test]
    fn builtin_catalogue() {
        let p = builtin("power11");
        assert_eq!(p.diffusion.max() / p.diffusion.min(), 1000.0);
        assert_eq!(p.diffusion.get(Region::One), 1000.0);
        assert_eq!(p.point_source, Some(PointSource { location: [0.0, 0.0], magnitude: 1000.0 }));

        let p = builtin("sinh_pbe");
        for xi in [-3.0, -0.5, 0.0, 2.0] {
            assert!(p.nonlinearity.d1(site(0.9, 0.9, Region::Two), xi) >= 1.0);
            assert_eq!(p.nonlinearity.d1(site(0.0, 0.0, Region::One), xi), 0.0);
        }

        assert!(matches!(builtin_problem("nope", &ProblemParams::new()), Err(ProblemError::UnknownProblem(_))));
        assert!(matches!(
            builtin_problem("power11", &params(&[("kappa", 1.0)])),
            Err(ProblemError::UnknownParameter { .. })
        ));
        assert!(builtin_problem("linear_reaction", &params(&[("c", -1.0)])).is_err());
        assert!(builtin_problem("power", &params(&[("p", 4.0)])).is_err());
    }

    #[test]
    fn manufactured_without_contrast_is_smooth() {
        let (_, sol) = manufactured_interface_problem(1.0, 1.0).unwrap();
        assert_eq!(sol.flux_residual, 0.0);
        for y in [-0.7, 0.1, 0.5] {
            let l = (sol.exact_grad)(site(0.0, y, Region::One));
            let r = (sol.exact_grad)(site(0.0, y, Region::Two));
            assert_eq!(l, r);
        }
    }

    #[test]
    fn manufactured_jump_conditions_on_interface() {
        let (problem, sol) = manufactured_interface_problem(1000.0, 1.0).unwrap();
        assert!(sol.flux_residual < 1e-12);
        assert!(sol.continuity_residual < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let y = rng.gen_range(-1.0..1.0);
            let (l, r) = (site(0.0, y, Region::One), site(0.0, y, Region::Two));
            assert!(((sol.exact)(l) - (sol.exact)(r)).abs() < 1e-12);
            let fl = problem.diffusion.get(Region::One) * (sol.exact_grad)(l)[0];
            let fr = problem.diffusion.get(Region::Two) * (sol.exact_grad)(r)[0];
            assert!((fl - fr).abs() < 1e-12);
        }
        // homogeneous Dirichlet data
        for t in [-1.0, -0.3, 0.4, 1.0] {
            for p in [[-1.0, t], [1.0, t], [t, -1.0], [t, 1.0]] {
                assert!((sol.exact)(Site { point: p, region: problem.geometry.region_of(p) }).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn manufactured_source_matches_finite_differences() {
        let (problem, sol) = manufactured_interface_problem(1000.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let x: f64 = rng.gen_range(-0.95..0.95);
            if x.abs() < 0.02 {
                continue;
            }
            let y = rng.gen_range(-0.95..0.95);
            let region = problem.geometry.region_of([x, y]);
            let d = problem.diffusion.get(region);
            let u = |x: f64, y: f64| (sol.exact)(Site { point: [x, y], region });
            let e = 1e-4;
            let lap = (u(x + e, y) + u(x - e, y) + u(x, y + e) + u(x, y - e) - 4.0 * u(x, y)) / (e * e);
            let s = Site { point: [x, y], region };
            let expected = -d * lap + problem.nonlinearity.eval(s, u(x, y));
            let got = (sol.source)(s);
            assert!(
                (got - expected).abs() <= 1e-5 * got.abs().max(1.0),
                "source mismatch at ({x},{y}): {got} vs {expected}"
            );
            let bound = problem.volume_source.as_ref().unwrap().upper;
            assert!(got.abs() <= bound);
        }
    }
}
