//! Seeded verification suites shared by the `verify` command and the
//! acceptance tests. Each suite returns one [`CriterionOutcome`] per check.

use std::fmt;
use std::time::{Duration, Instant};

use rand::Rng;

use crate::adaptive::{adaptive_fit, rate_r, LepskiGrid};
use crate::datagen::{contaminate, generate_clean, ols, ContaminationKind, ContaminationStrategy, DistributionSpec};
use crate::model::{init_radius, rounding_margin, ConstantsProfile, ProblemDims, SpectralInputs};
use crate::mwu::{mw_iterate, spherical_round, MwInputs, RoundBudget};
use crate::numerics::{kl_project_capped_simplex, top_eigenvector, unit_sphere_draw};
use crate::oracles;
use crate::pruning::prune;
use crate::regression::{inner_update, robust_regression, FitSettings, NoiseLevel};
use crate::rng::{derive_seed, stream, PURPOSE_DATA};
use crate::{Matrix, Vector};

/// How many instances a suite runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Full,
    /// Roughly a tenth of the work, for smoke runs.
    Quick,
}

impl Scale {
    fn count(self, full: usize) -> usize {
        match self {
            Scale::Full => full,
            Scale::Quick => (full / 10).max(3),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionOutcome {
    pub id: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {} [{}]: {} ({}; {:.2}s)",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

fn outcome(id: &'static str, name: &'static str, passed: bool, detail: String, start: Instant) -> CriterionOutcome {
    CriterionOutcome {
        id,
        name,
        passed,
        detail,
        elapsed: start.elapsed(),
    }
}

fn within(start: Instant, limit_secs: f64) -> bool {
    start.elapsed().as_secs_f64() < limit_secs
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Water-filling projection against the projected-gradient oracle.
pub fn kl_projection(scale: Scale, seed: u64) -> CriterionOutcome {
    let start = Instant::now();
    let count = scale.count(500);
    let mut rng = stream(seed);
    let mut worst = 0.0f64;
    let mut failures = 0;
    for _ in 0..count {
        let kk = rng.random_range(2..=50usize);
        let k = rng.random_range(0..kk);
        let cap = 1.0 / (kk - k) as f64;
        let zeros = rng.random_range(0..=k);
        let mut w_hat: Vec<f64> = match rng.random_range(0..3) {
            0 => vec![1.0 / kk as f64; kk],
            1 => {
                let mut w = vec![1e-3; kk];
                w[rng.random_range(0..kk)] = 1.0;
                w
            }
            _ => (0..kk).map(|_| rng.random::<f64>().powi(3) + 1e-9).collect(),
        };
        for i in rand::seq::index::sample(&mut rng, kk, zeros) {
            w_hat[i] = 0.0;
        }
        let total: f64 = w_hat.iter().sum();
        w_hat.iter_mut().for_each(|x| *x /= total);
        let fast = kl_project_capped_simplex(&w_hat, cap);
        let brute = oracles::brute_kl_project(&w_hat, cap, 10_000);
        match (fast, brute) {
            (Ok(a), Ok(b)) => {
                let d = (oracles::kl(&a, &w_hat) - oracles::kl(&b, &w_hat)).abs();
                worst = worst.max(d);
                if d > 1e-8 {
                    failures += 1;
                }
            }
            _ => failures += 1,
        }
    }
    let passed = failures == 0 && within(start, 10.0);
    outcome(
        "1",
        "KL projection oracle",
        passed,
        format!("{count} instances, {failures} mismatches, max KL gap {worst:.2e} (tol 1e-8)"),
        start,
    )
}

/// Power iteration against the Jacobi eigensolver.
pub fn eigenvector(scale: Scale, seed: u64) -> CriterionOutcome {
    let start = Instant::now();
    let count = scale.count(200);
    let mut rng = stream(seed);
    let mut worst = 0.0f64;
    let mut failures = 0;
    for i in 0..count {
        let p = rng.random_range(1..=50usize);
        let rows = rng.random_range(1..=2 * p);
        let a = Matrix::from_fn(rows, p, |_, _| rng.random_range(-1.0..1.0));
        let m = a.transpose() * &a;
        let exact = oracles::exact_eig(&m);
        let top = exact.values[0];
        let norm = top.max(f64::MIN_POSITIVE);
        match top_eigenvector(&m, 1e-10, 1_000_000, derive_seed(seed, &[i as u64])) {
            Ok(pair) => {
                let rel = (pair.value - top).abs() / norm;
                worst = worst.max(rel);
                if rel > 1e-8 {
                    failures += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    let passed = failures == 0 && within(start, 10.0);
    outcome(
        "2",
        "top eigenvector oracle",
        passed,
        format!("{count} matrices, {failures} mismatches, max relative gap {worst:.2e} (tol 1e-8)"),
        start,
    )
}

/// `kk` rows of which the first `count` have `|z_1| >= theta0` and small
/// other coordinates; the rest are arbitrary in `[-2, 2]^p`.
pub fn planted_points(kk: usize, p: usize, count: usize, theta0: f64, seed: u64) -> Matrix {
    let mut rng = stream(seed);
    Matrix::from_fn(kk, p, |i, j| {
        if i < count {
            if j == 0 {
                let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
                s * (theta0 + rng.random_range(0.0..0.5))
            } else {
                rng.random_range(-0.3..0.3)
            }
        } else {
            rng.random_range(-2.0..2.0)
        }
    })
}

const PLANTED_K: usize = 60;
const PLANTED_P: usize = 4;
const PLANTED_SLACK: usize = 5;
const PLANTED_ONE_SIDED: usize = 15;

/// Quantile property of the averaged MW matrix, and the regret inequality
/// along the same runs.
pub fn mw_quantile_and_regret(scale: Scale, seed: u64) -> (CriterionOutcome, CriterionOutcome) {
    let start = Instant::now();
    let runs = scale.count(50);
    let theta0 = 1.0;
    let kk = PLANTED_K;
    let budget = RoundBudget {
        max_rounds: 2000,
        min_rounds: 0,
        record_history: true,
    };
    let mut worst_count = usize::MAX;
    let mut quantile_failures = 0;
    let mut traces = Vec::with_capacity(runs);
    for r in 0..runs {
        let z = planted_points(kk, PLANTED_P, kk - PLANTED_SLACK, theta0, derive_seed(seed, &[r as u64]));
        let inputs = MwInputs::new(z.clone(), 200, PLANTED_SLACK, PLANTED_ONE_SIDED, 1.0, theta0);
        match mw_iterate(&inputs, &budget, derive_seed(seed, &[r as u64, 1])) {
            Ok(trace) => {
                let above = z
                    .row_iter()
                    .filter(|row| (row * &trace.m * row.transpose())[(0, 0)] > theta0 * theta0 / 6.0)
                    .count();
                worst_count = worst_count.min(above);
                if above <= kk - 2 * PLANTED_SLACK {
                    quantile_failures += 1;
                }
                traces.push((inputs, trace));
            }
            Err(_) => quantile_failures += 1,
        }
    }
    let quantile = outcome(
        "3",
        "MW quantile certificate",
        quantile_failures == 0 && within(start, 60.0),
        format!(
            "{runs} runs, {quantile_failures} failing, min count above theta0^2/6 = {worst_count} (need > {})",
            kk - 2 * PLANTED_SLACK
        ),
        start,
    );

    let start = Instant::now();
    let mut rng = stream(derive_seed(seed, &[0x7265_6772]));
    let mut checks = 0u64;
    let mut violations = 0u64;
    let mut worst = f64::NEG_INFINITY;
    for (inputs, trace) in &traces {
        let ws = trace.weights_history.as_ref().expect("history recorded");
        let taus = trace.tau_history.as_ref().expect("history recorded");
        let uniform = vec![1.0 / kk as f64; kk];
        let learner: Vec<f64> = ws.iter().zip(taus).map(|(w, t)| dot(w, t)).collect();
        for _ in 0..100 {
            let w = oracles::random_capped_simplex_point(&mut rng, kk, inputs.cap());
            let kl = oracles::kl(&w, &uniform);
            let (mut lhs, mut rhs) = (0.0, 0.0);
            for (t, tau) in taus.iter().enumerate() {
                lhs += learner[t];
                rhs += dot(&w, tau);
                let tt = (t + 1) as f64;
                let gap = lhs / tt - (1.5 * rhs / tt + 2.0 * inputs.u_bound * kl / tt);
                worst = worst.max(gap);
                checks += 1;
                if gap > 1e-9 {
                    violations += 1;
                }
            }
        }
    }
    let regret = outcome(
        "5",
        "regret inequality",
        violations == 0 && !traces.is_empty(),
        format!("{checks} (run, comparator, t) checks, {violations} violations, max lhs - rhs = {worst:.3e} (tol 1e-9)"),
        start,
    );
    (quantile, regret)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Success rate of spherical rounding on one planted instance.
pub fn rounding(scale: Scale, seed: u64) -> CriterionOutcome {
    let start = Instant::now();
    let reruns = scale.count(500);
    let samples = 200;
    let theta0 = 1.0;
    let kk = PLANTED_K;
    let z = planted_points(kk, PLANTED_P, kk - PLANTED_SLACK, theta0, seed);
    let inputs = MwInputs::new(z.clone(), samples, PLANTED_SLACK, PLANTED_ONE_SIDED, 1.0, theta0);
    let phi = 0.49 * std::f64::consts::PI;
    let margin = rounding_margin(phi, PLANTED_SLACK, PLANTED_ONE_SIDED, kk);
    let required = 1.0 - (-margin * margin * samples as f64 / 7.72).exp() - 0.03;
    let floor = phi.cos() * theta0 / 6f64.sqrt();
    let trace = match mw_iterate(&inputs, &RoundBudget::default(), derive_seed(seed, &[1])) {
        Ok(t) => t,
        Err(e) => return outcome("4", "rounding success probability", false, format!("mw failed: {e}"), start),
    };
    let mut good = 0;
    let mut thetas = Vec::with_capacity(reruns);
    for r in 0..reruns {
        let seed_r = derive_seed(seed, &[2, r as u64]);
        if let Ok(cert) = spherical_round(&z, &trace.m, samples, PLANTED_SLACK, PLANTED_ONE_SIDED, seed_r) {
            thetas.push(cert.theta);
            if cert.certifies(kk, PLANTED_ONE_SIDED) && cert.theta >= floor {
                good += 1;
            }
        }
    }
    let rate = good as f64 / reruns as f64;
    outcome(
        "4",
        "rounding success probability",
        rate >= required && within(start, 120.0),
        format!(
            "{good}/{reruns} valid with theta >= {floor:.4}, rate {rate:.3} vs required {required:.3} (margin p = {margin:.4}), median theta {:.3}",
            median(&thetas)
        ),
        start,
    )
}

/// Initialization radius on clean Gaussian data.
pub fn initialization(scale: Scale, seed: u64) -> CriterionOutcome {
    let start = Instant::now();
    let seeds = scale.count(200);
    let dims = ProblemDims::new(2000, 2, 20, 0.2, 0.0).expect("valid dims");
    let dist = DistributionSpec::gaussian(2, 1.0);
    let spectral = SpectralInputs::identity();
    let xi = dist.noise_covariance(0, 0).expect("closed form");
    let r = init_radius(&dims, &spectral, xi.trace());
    let b_star = Vector::from_vec(vec![1.0, -2.0]);
    let mut inside = 0;
    let mut errors = Vec::with_capacity(seeds);
    for s in 0..seeds {
        let data = generate_clean(&dims, &dist, &b_star, derive_seed(seed, &[s as u64])).expect("valid spec");
        let out = prune(&data, dims.buckets, dims.eta).expect("valid dims");
        let e = (&out.b0 - &b_star).norm();
        errors.push(e);
        if e <= 3.0 * r {
            inside += 1;
        }
    }
    let rate = inside as f64 / seeds as f64;
    outcome(
        "6",
        "initialization bound",
        rate >= 0.95 && within(start, 120.0),
        format!(
            "{inside}/{seeds} within 3r = {:.4}, median error {:.4}",
            3.0 * r,
            median(&errors)
        ),
        start,
    )
}

/// Constants `(a, a1, a2, a3, a4)` of the outer descent step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentConstants {
    pub a: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
}

impl DescentConstants {
    /// `a1 = C_{α1}`, `a2 = C_{α4}`, `a3 = C_{α2}`, `a4 = D_*`.
    pub fn from_profile(c: &ConstantsProfile) -> Self {
        Self {
            a: c.a,
            a1: c.const_alpha1,
            a2: c.const_alpha4,
            a3: c.const_alpha2,
            a4: c.d_star,
        }
    }
}

/// One synthetic outer step.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterInstance {
    pub sigma: Matrix,
    pub b: Vector,
    pub b_star: Vector,
    pub theta: f64,
    pub v_hat: Vector,
    pub mu_hat: Vector,
    pub r1: f64,
    pub r2: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepCheck {
    pub preconditions: bool,
    /// `|b⁺ - b*|² / |b - b*|²`.
    pub actual: f64,
    pub claimed: f64,
    /// Violation beyond `1e-9` of the claimed decrease.
    pub violated: bool,
}

fn spectral_of(sigma: &Matrix) -> (f64, f64, f64) {
    let eig = oracles::exact_eig(sigma);
    let top = eig.values[0];
    let low = *eig.values.last().expect("nonempty");
    (1.0 / low, top, top / low)
}

pub fn check_outer_step(inst: &OuterInstance, c: &DescentConstants) -> StepCheck {
    let (mu2, sig, kappa) = spectral_of(&inst.sigma);
    let d = (&inst.b_star - &inst.b).norm();
    let pi = (&inst.sigma * (&inst.b_star - &inst.b)).dot(&inst.v_hat);
    let tol = 1e-12 * (1.0 + d);
    let a_ok = c.a / 2.0 * d <= inst.theta + c.a1 * mu2 * inst.r1 + tol;
    let b_ok = inst.theta <= pi + c.a2 * mu2 * sig * inst.r2 * d + c.a3 * mu2 * inst.r1 + tol;
    let d_ok = (c.a4 * d).max((c.a1 + c.a3) * mu2 * inst.r1) <= pi + tol;
    let est_ok = (&inst.mu_hat - &inst.sigma * &inst.v_hat).norm() <= inst.delta + 1e-15;
    let side_ok = inst.delta > 0.0 && inst.delta < 1.0 && inst.delta < c.a / 16.0 && c.a2 * kappa * inst.r2 <= 0.25;
    let norm_ok = inst.v_hat.norm() <= mu2 * (1.0 + 1e-12);
    let k2 = kappa * kappa;
    let denom = 8.0 * (2.0 + c.a2) * k2 * (k2 + inst.delta * inst.delta);
    let c_star = c.a / denom;
    let b_plus = &inst.b + &inst.mu_hat * (c_star * (inst.theta + c.a1 * mu2 * inst.r1));
    let actual = (&b_plus - &inst.b_star).norm_squared() / (d * d);
    let claimed = 1.0 - c.a * c.a / (4.0 * denom);
    StepCheck {
        preconditions: a_ok && b_ok && d_ok && est_ok && side_ok && norm_ok,
        actual,
        claimed,
        violated: actual - claimed > 1e-9 * (1.0 - claimed),
    }
}

/// Identity covariance, `r1 = r2 = 0`, `v̂ = -(a/2) e/|e|` and `θ̂ = a|e|/2`:
/// every precondition holds when `a4 <= a/2`.
pub fn outer_boundary_instance(c: &DescentConstants, p: usize) -> OuterInstance {
    let mut e = Vector::zeros(p);
    e[0] = 1.0;
    let b_star = Vector::zeros(p);
    let v_hat = &e * (-c.a / 2.0);
    OuterInstance {
        sigma: Matrix::identity(p, p),
        b: e,
        b_star,
        theta: c.a / 2.0,
        mu_hat: v_hat.clone(),
        v_hat,
        r1: 0.0,
        r2: 0.0,
        delta: c.a / 32.0,
    }
}

/// Random instance satisfying every precondition, or `None` when the draw
/// leaves an empty range.
pub fn random_outer_instance<R: Rng + ?Sized>(rng: &mut R, c: &DescentConstants, p: usize) -> Option<OuterInstance> {
    let diag = Vector::from_fn(p, |_, _| rng.random_range(0.5..2.0));
    let sigma = Matrix::from_diagonal(&diag);
    let (mu2, sig, kappa) = spectral_of(&sigma);
    let d = 10f64.powf(rng.random_range(-1.0..1.0));
    let b_star = Vector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
    let e = unit_sphere_draw(rng, p) * d;
    let b = &b_star + &e;
    let r1 = if rng.random::<bool>() { 0.0 } else { rng.random_range(0.0..1e-5) * d };
    let r2 = if rng.random::<bool>() { 0.0 } else { rng.random_range(0.0..1.0) / (4.0 * c.a2 * kappa) };
    let grad = &sigma * (&b_star - &b);
    let w = grad.normalize();
    let u = (unit_sphere_draw(rng, p) * rng.random_range(0.0..2.0) + &w).normalize();
    let cos = u.dot(&w);
    if cos <= 0.0 {
        return None;
    }
    let need = (c.a4 * d).max((c.a1 + c.a3) * mu2 * r1);
    let lo_scale = need / (grad.norm() * cos);
    if lo_scale > mu2 {
        return None;
    }
    let scale = if rng.random::<bool>() { lo_scale } else { rng.random_range(lo_scale..=mu2) };
    let v_hat = u * scale;
    let pi = grad.dot(&v_hat);
    let lo = (c.a / 2.0 * d - c.a1 * mu2 * r1).max(0.0);
    let hi = pi + c.a2 * mu2 * sig * r2 * d + c.a3 * mu2 * r1;
    if lo > hi {
        return None;
    }
    let theta = match rng.random_range(0..3) {
        0 => lo,
        1 => hi,
        _ => rng.random_range(lo..=hi),
    };
    let delta = rng.random_range(0.01..1.0) * (c.a / 16.0).min(1.0);
    let mu_hat = &sigma * &v_hat + unit_sphere_draw(rng, p) * (delta * rng.random_range(0.0..1.0));
    Some(OuterInstance {
        sigma,
        b,
        b_star,
        theta,
        v_hat,
        mu_hat,
        r1,
        r2,
        delta,
    })
}

/// One synthetic inner step: `μ⁺ = μ + c̄_* θ̃ ṽ` against the target `Σv̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerInstance {
    pub target: Vector,
    pub mu: Vector,
    pub theta: f64,
    pub v: Vector,
    pub bar_r1: f64,
}

/// Preconditions: `|μ - Σv̂| >= 1.32e5 r̄1`, `θ̃` within
/// `[D/78.125 - C r̄1, D + C r̄1]` with `C = C_{ᾱ1}`, `<ṽ, μ - Σv̂> <= -D/156.25`
/// and `|ṽ| <= 1`.
pub fn check_inner_step(inst: &InnerInstance, consts: &ConstantsProfile) -> StepCheck {
    let diff = &inst.mu - &inst.target;
    let d = diff.norm();
    let cr = consts.const_bar_alpha1 * inst.bar_r1;
    let tol = 1e-12 * (1.0 + d);
    let pre = d >= 1.32e5 * inst.bar_r1 - tol
        && inst.theta >= d / 78.125 - cr - tol
        && inst.theta <= d + cr + tol
        && inst.v.dot(&diff) <= -d / 156.25 + tol
        && inst.v.norm() <= 1.0 + 1e-12;
    let next = inner_update(&inst.mu, inst.theta, &inst.v, consts.bar_c_star);
    let actual = (&next - &inst.target).norm_squared() / (d * d);
    let claimed = 1.0 - consts.bar_delta0;
    StepCheck {
        preconditions: pre,
        actual,
        claimed,
        violated: actual - claimed > 1e-9 * (1.0 - claimed),
    }
}

pub fn random_inner_instance<R: Rng + ?Sized>(rng: &mut R, consts: &ConstantsProfile, p: usize) -> InnerInstance {
    let target = Vector::from_fn(p, |_, _| rng.random_range(-2.0..2.0));
    let d = 10f64.powf(rng.random_range(-2.0..2.0));
    let bar_r1 = if rng.random::<bool>() { d / 1.32e5 } else { rng.random_range(0.0..1.0) * d / 1.32e5 };
    let u = unit_sphere_draw(rng, p);
    let mu = &target + &u * d;
    let norm = if rng.random::<bool>() { 1.0 } else { rng.random_range(1.0 / 156.25..=1.0) };
    let c_max = -1.0 / (156.25 * norm);
    let c = if rng.random::<bool>() { c_max } else { rng.random_range(-1.0..=c_max) };
    let g = unit_sphere_draw(rng, p);
    let perp = (&g - &u * g.dot(&u)).normalize();
    let v = (&u * c + &perp * (1.0 - c * c).max(0.0).sqrt()) * norm;
    let cr = consts.const_bar_alpha1 * bar_r1;
    let lo = (d / 78.125 - cr).max(0.0);
    let hi = d + cr;
    let theta = match rng.random_range(0..3) {
        0 => lo,
        1 => hi,
        _ => rng.random_range(lo..=hi),
    };
    InnerInstance {
        target,
        mu,
        theta,
        v,
        bar_r1,
    }
}

/// Constructed-instance ledgers for the outer and inner contraction claims
/// under the exact constants.
pub fn descent_ledgers(scale: Scale, seed: u64) -> (CriterionOutcome, CriterionOutcome) {
    let start = Instant::now();
    let consts = ConstantsProfile::paper();
    let c = DescentConstants::from_profile(&consts);
    let count = scale.count(2000);
    let mut rng = stream(seed);

    let mut outer_checked = 0;
    let mut outer_bad = 0;
    let mut worst = (f64::NEG_INFINITY, 0.0, 0.0);
    let mut record = |chk: StepCheck, checked: &mut usize, bad: &mut usize| {
        if !chk.preconditions {
            return;
        }
        *checked += 1;
        let excess = (chk.actual - chk.claimed) / (1.0 - chk.claimed);
        if excess > worst.0 {
            worst = (excess, chk.actual, chk.claimed);
        }
        if chk.violated {
            *bad += 1;
        }
    };
    let boundary = check_outer_step(&outer_boundary_instance(&c, 3), &c);
    record(boundary.clone(), &mut outer_checked, &mut outer_bad);
    let mut drawn = 0;
    while drawn < count {
        if let Some(inst) = random_outer_instance(&mut rng, &c, 3) {
            drawn += 1;
            record(check_outer_step(&inst, &c), &mut outer_checked, &mut outer_bad);
        }
    }
    let outer = outcome(
        "7(outer)",
        "outer descent contraction ledger",
        outer_checked > 0 && outer_bad == 0,
        format!(
            "{outer_checked} instances meeting the preconditions, {outer_bad} above the claimed factor; \
             boundary instance ratio {:.12} vs claimed {:.12}; worst excess {:.3e} of the claimed decrease",
            boundary.actual, boundary.claimed, worst.0
        ),
        start,
    );

    let start = Instant::now();
    let mut inner_checked = 0;
    let mut inner_bad = 0;
    let mut worst_margin = f64::INFINITY;
    for _ in 0..count {
        let inst = random_inner_instance(&mut rng, &consts, 3);
        let chk = check_inner_step(&inst, &consts);
        if chk.preconditions {
            inner_checked += 1;
            worst_margin = worst_margin.min((1.0 - chk.actual) / (1.0 - chk.claimed));
            if chk.violated {
                inner_bad += 1;
            }
        }
    }
    let inner = outcome(
        "7(inner)",
        "inner descent contraction ledger",
        inner_checked > 0 && inner_bad == 0,
        format!(
            "{inner_checked} instances meeting the preconditions, {inner_bad} above the claimed factor; \
             smallest achieved/claimed decrease {worst_margin:.3}"
        ),
        start,
    );
    (outer, inner)
}

/// Setting of the end-to-end and sweep checks.
#[derive(Debug, Clone, PartialEq)]
pub struct EndToEndSetting {
    pub n: usize,
    pub p: usize,
    pub buckets: usize,
    pub eta: f64,
    pub sigma: f64,
    pub kind: ContaminationKind,
    pub magnitude: f64,
    pub settings: FitSettings,
}

impl Default for EndToEndSetting {
    fn default() -> Self {
        Self {
            n: 5000,
            p: 5,
            buckets: 100,
            eta: 0.2,
            sigma: 1.0,
            kind: ContaminationKind::ClusterAtPoint,
            magnitude: 1e6,
            settings: FitSettings::practical(100, 0.2),
        }
    }
}

/// Errors of one seed at one contamination level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedErrors {
    pub robust: f64,
    /// Error of the initialization `b̃⁽⁰⁾`.
    pub initial: f64,
    pub ols: f64,
    pub oracle_ols: f64,
    pub accepted_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonSweep {
    pub setting: EndToEndSetting,
    /// `(ε, per-seed errors)`, in the order given.
    pub cells: Vec<(f64, Vec<SeedErrors>)>,
    /// Fits that returned an error, as `(ε, seed, message)`.
    pub failures: Vec<(f64, usize, String)>,
    pub elapsed: Duration,
}

impl EpsilonSweep {
    /// The clean sample for a seed is shared across ε so every level
    /// corrupts the same draw.
    pub fn run(setting: EndToEndSetting, eps: &[f64], seeds: usize, seed: u64) -> Self {
        let start = Instant::now();
        let dist = DistributionSpec::gaussian(setting.p, setting.sigma);
        let b_star = Vector::from_element(setting.p, 1.0);
        let consts = ConstantsProfile::practical();
        let spectral = SpectralInputs::identity();
        let zeta = setting.sigma * setting.sigma;
        let mut cells: Vec<(f64, Vec<SeedErrors>)> = eps.iter().map(|&e| (e, Vec::new())).collect();
        let mut failures = Vec::new();
        for s in 0..seeds {
            let data_seed = derive_seed(seed, &[PURPOSE_DATA, s as u64]);
            let base = ProblemDims::new(setting.n, setting.p, setting.buckets, setting.eta, 0.0).expect("valid setting");
            let clean = generate_clean(&base, &dist, &b_star, data_seed).expect("valid spec");
            for (e, errs) in cells.iter_mut() {
                let dims = ProblemDims::new(setting.n, setting.p, setting.buckets, setting.eta, *e).expect("valid eps");
                let strategy = ContaminationStrategy::new(setting.kind, setting.magnitude);
                let data = contaminate(&clean, &strategy, dims.outliers, data_seed).expect("valid attack");
                let fit = robust_regression(&data, &setting.settings, NoiseLevel::Zeta(zeta), &consts, &spectral, s as u64);
                match fit {
                    Ok(fit) => errs.push(SeedErrors {
                        robust: (&fit.b_hat - &b_star).norm(),
                        initial: (&fit.b0 - &b_star).norm(),
                        ols: (ols(&data) - &b_star).norm(),
                        oracle_ols: (crate::datagen::oracle_ols(&data) - &b_star).norm(),
                        accepted_steps: fit.accepted_steps,
                    }),
                    Err(err) => failures.push((*e, s, err.to_string())),
                }
            }
        }
        Self {
            setting,
            cells,
            failures,
            elapsed: start.elapsed(),
        }
    }

    pub fn medians(&self, eps: f64) -> Option<(f64, f64, f64)> {
        let (_, errs) = self.cells.iter().find(|(e, _)| *e == eps)?;
        let pick = |f: fn(&SeedErrors) -> f64| median(&errs.iter().map(f).collect::<Vec<_>>());
        Some((pick(|e| e.robust), pick(|e| e.ols), pick(|e| e.oracle_ols)))
    }
}

pub const SWEEP_EPS: [f64; 4] = [0.0, 0.02, 0.05, 0.1];

pub fn end_to_end(sweep: &EpsilonSweep) -> CriterionOutcome {
    let start = Instant::now();
    let (Some(clean), Some(attacked)) = (sweep.medians(0.0), sweep.medians(0.05)) else {
        return outcome("8", "end-to-end robustness", false, "sweep lacks eps 0 or 0.05".into(), start);
    };
    let robust_ok = attacked.0 < 0.5 * attacked.1;
    let clean_ok = clean.0 < 3.0 * clean.1;
    let diag = |eps: f64| {
        let (_, errs) = sweep.cells.iter().find(|(e, _)| *e == eps).expect("level present");
        let init = median(&errs.iter().map(|e| e.initial).collect::<Vec<_>>());
        let steps = median(&errs.iter().map(|e| e.accepted_steps as f64).collect::<Vec<_>>());
        format!("median initial error {init:.4}, median accepted steps {steps}")
    };
    CriterionOutcome {
        id: "8",
        name: "end-to-end robustness",
        passed: robust_ok && clean_ok && sweep.failures.is_empty() && sweep.elapsed.as_secs_f64() < 600.0,
        detail: format!(
            "eps=0.05: median robust {:.4} vs 0.5 x contaminated OLS {:.4} [{}] ({}); \
             eps=0: median robust {:.4} vs 3 x clean OLS {:.4} [{}] ({}); {} fit errors",
            attacked.0,
            0.5 * attacked.1,
            if robust_ok { "ok" } else { "miss" },
            diag(0.05),
            clean.0,
            3.0 * clean.1,
            if clean_ok { "ok" } else { "miss" },
            diag(0.0),
            sweep.failures.len()
        ),
        elapsed: sweep.elapsed,
    }
}

/// Least-squares slope of `ys` on `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub fn rate_shape(sweep: &EpsilonSweep) -> CriterionOutcome {
    let start = Instant::now();
    let p_over_n = sweep.setting.p as f64 / sweep.setting.n as f64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (e, _) in &sweep.cells {
        if let Some((m, _, _)) = sweep.medians(*e) {
            xs.push((e + p_over_n).ln());
            ys.push(m.ln());
        }
    }
    let monotone = ys.windows(2).all(|w| w[1] >= w[0]);
    let slope = ols_slope(&xs, &ys);
    let slope_ok = (0.3..=0.7).contains(&slope);
    let medians: Vec<String> = ys.iter().map(|y| format!("{:.4}", y.exp())).collect();
    outcome(
        "9",
        "rate scaling shape",
        monotone && slope_ok && xs.len() == SWEEP_EPS.len(),
        format!(
            "medians [{}] {}; log-log slope {slope:.3} (need [0.3, 0.7])",
            medians.join(", "),
            if monotone { "nondecreasing" } else { "not monotone" }
        ),
        start,
    )
}

/// Lepski selection with a planted noise level inside the grid.
pub fn adaptive_selection(scale: Scale, seed: u64) -> CriterionOutcome {
    let start = Instant::now();
    let seeds = scale.count(30);
    let (n, p, k) = (2000, 3, 40);
    let xi_norm: f64 = 4.0;
    let grid = LepskiGrid::new(64.0, 0.5).expect("valid grid");
    let dist = DistributionSpec::gaussian(p, xi_norm.sqrt());
    let dims = ProblemDims::new(n, p, k, 0.2, 0.0).expect("valid dims");
    let consts = ConstantsProfile::practical();
    let spectral = SpectralInputs::identity();
    let mut settings = FitSettings::practical(k, 0.2);
    settings.outer_rounds = 30;
    settings.inner_rounds = 30;
    let b_star = Vector::from_vec(vec![1.0, -1.0, 0.5]);
    let mut inside = 0;
    let mut above_zeta0 = 0;
    let mut errors = 0;
    let mut bound = f64::NAN;
    let mut chosen = Vec::new();
    for s in 0..seeds {
        let data = generate_clean(&dims, &dist, &b_star, derive_seed(seed, &[s as u64])).expect("valid spec");
        match adaptive_fit(&data, &settings, &grid, &consts, &spectral, s as u64) {
            Ok(fit) => {
                let c_star = fit.levels[0].fit.steps.c_star;
                bound = 3.0 * rate_r(xi_norm / grid.gamma, settings.outer_rounds, &consts, &spectral, &dims, c_star);
                if (&fit.b_hat - &b_star).norm() <= bound {
                    inside += 1;
                }
                if grid.levels[fit.chosen - 1] > grid.zeta0 {
                    above_zeta0 += 1;
                }
                chosen.push(fit.chosen);
            }
            Err(_) => errors += 1,
        }
    }
    let rate = inside as f64 / seeds as f64;
    outcome(
        "10",
        "adaptive selection",
        rate >= 0.9 && above_zeta0 == 0 && errors == 0,
        format!(
            "{inside}/{seeds} within 3R(|Xi|/gamma) = {bound:.3e}, {above_zeta0} selections above zeta0, {errors} errors, chosen levels {chosen:?}"
        ),
        start,
    )
}

/// Suite names accepted by [`run_suite`].
pub const SUITE_NAMES: [&str; 9] = [
    "kl", "eigen", "mw", "rounding", "init", "descent", "end-to-end", "adaptive", "all",
];

/// Runs one named suite. `end-to-end` covers both the robustness and the
/// rate-shape checks.
pub fn run_suite(name: &str, scale: Scale, seed: u64) -> Option<Vec<CriterionOutcome>> {
    let out = match name {
        "kl" => vec![kl_projection(scale, seed)],
        "eigen" => vec![eigenvector(scale, seed)],
        "mw" => {
            let (a, b) = mw_quantile_and_regret(scale, seed);
            vec![a, b]
        }
        "rounding" => vec![rounding(scale, seed)],
        "init" => vec![initialization(scale, seed)],
        "descent" => {
            let (a, b) = descent_ledgers(scale, seed);
            vec![a, b]
        }
        "end-to-end" => {
            let sweep = EpsilonSweep::run(EndToEndSetting::default(), &SWEEP_EPS, scale.count(50), seed);
            vec![end_to_end(&sweep), rate_shape(&sweep)]
        }
        "adaptive" => vec![adaptive_selection(scale, seed)],
        "all" => {
            let mut all = Vec::new();
            for n in &SUITE_NAMES[..SUITE_NAMES.len() - 1] {
                all.extend(run_suite(n, scale, seed)?);
            }
            all
        }
        _ => return None,
    };
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn slope_of_a_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 * x + 2.0).collect();
        assert!((ols_slope(&xs, &ys) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn boundary_instance_meets_preconditions() {
        for c in [
            DescentConstants::from_profile(&ConstantsProfile::paper()),
            DescentConstants {
                a: 0.5,
                a1: 10.0,
                a2: 10.0,
                a3: 10.0,
                a4: 0.1,
            },
        ] {
            let chk = check_outer_step(&outer_boundary_instance(&c, 3), &c);
            assert!(chk.preconditions);
            // Exact ratio (1 - c* a^2 / 4)^2 for this instance.
            let denom = 8.0 * (2.0 + c.a2) * (1.0 + (c.a / 32.0).powi(2));
            let c_star = c.a / denom;
            let want = (1.0 - c_star * c.a * c.a / 4.0).powi(2);
            assert!((chk.actual - want).abs() < 1e-15);
        }
    }

    #[test]
    fn random_instances_meet_preconditions() {
        let consts = ConstantsProfile::paper();
        let c = DescentConstants::from_profile(&consts);
        let mut rng = stream(3);
        let mut got = 0;
        for _ in 0..200 {
            if let Some(inst) = random_outer_instance(&mut rng, &c, 3) {
                assert!(check_outer_step(&inst, &c).preconditions);
                got += 1;
            }
            assert!(check_inner_step(&random_inner_instance(&mut rng, &consts, 3), &consts).preconditions);
        }
        assert!(got > 20);
    }

    #[test]
    fn inner_claim_fails_without_its_preconditions() {
        // A direction orthogonal to the error gives no decrease at all.
        let consts = ConstantsProfile::paper();
        let inst = InnerInstance {
            target: Vector::zeros(2),
            mu: Vector::from_vec(vec![1.0, 0.0]),
            theta: 0.5,
            v: Vector::from_vec(vec![0.0, 1.0]),
            bar_r1: 0.0,
        };
        let chk = check_inner_step(&inst, &consts);
        assert!(!chk.preconditions);
        assert!(chk.violated);
    }

    #[test]
    fn unknown_suite_is_none() {
        assert!(run_suite("nope", Scale::Quick, 0).is_none());
    }

    #[test]
    fn quick_suites_report() {
        for name in ["kl", "eigen", "init"] {
            let out = run_suite(name, Scale::Quick, 1).unwrap();
            assert!(!out.is_empty());
            assert!(out[0].to_string().contains("criterion"));
        }
    }
}
