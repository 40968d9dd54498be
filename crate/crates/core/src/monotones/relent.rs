//! Assemblage relative entropy and the relative entropy of steering.
//!
//! For a fixed strategy `(E_γ, P_{X|Γ})` and two no-signaling assemblages
//! the objective collapses to
//! `Σ_{γ,x,a} P(x|γ) Tr A (log A − log B)` with `A = E_γ ρ(a,x) E_γ†` and
//! `B = E_γ σ(a,x) E_γ†`, which is jointly convex. The optimizers work with
//! that form; [`assemblage_relative_entropy`] evaluates the definition
//! literally.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use rand::Rng;

use crate::assemblage::Assemblage;
use crate::error::{Result, SteeringError};
use crate::lhs::{assemble_decomposition, enumerate_deterministic_strategies, DeterministicStrategy};
use crate::linalg::{
    c, divergence_from_spectra, kl_divergence, CMat, Divergence, HermitianMatrix, ProbTable, Spectrum, PROB_TOL,
    SUPPORT_TOL, ZERO_EIGENVALUE,
};
use crate::par::{self, ExecMode};
use crate::random;
use crate::snio::SnioMap;

pub const COMPLETENESS_TOL: f64 = 1e-9;
/// Shift applied to eigenvalues before logarithms inside gradients only.
const LOG_REG: f64 = 1e-12;

/// A generalized measurement `{E_γ}` on Bob's side plus the input choice
/// `P(x|γ)`, stored as a conditional table with axes `[x, γ]`.
#[derive(Clone, Debug, PartialEq)]
pub struct StrategyParams {
    effects: Vec<CMat>,
    p_x_given_gamma: ProbTable,
}

impl StrategyParams {
    pub fn new(effects: Vec<CMat>, p_x_given_gamma: ProbTable) -> Result<Self> {
        let Some(first) = effects.first() else {
            return Err(SteeringError::InvalidMeasurement("strategy without effects".into()));
        };
        let shape = first.shape();
        if effects.iter().any(|e| e.shape() != shape) {
            return Err(SteeringError::Dimension("effects must share a shape".into()));
        }
        let ps = p_x_given_gamma.shape();
        if ps.len() != 2 || ps[1] != effects.len() {
            return Err(SteeringError::Dimension(format!(
                "P(x|γ) has shape {ps:?} for {} effects",
                effects.len()
            )));
        }
        let st = Self { effects, p_x_given_gamma };
        let res = st.completeness_residual();
        if res > COMPLETENESS_TOL {
            return Err(SteeringError::InvalidMeasurement(format!("Σ E†E deviates from I by {res:.3e}")));
        }
        Ok(st)
    }

    /// One effect `E = I` and input `x_star`.
    pub fn trivial(d: usize, s: usize, x_star: usize) -> Self {
        Self { effects: vec![CMat::identity(d, d)], p_x_given_gamma: point_masses(s, &[x_star]) }
    }

    /// Rank-one projectors onto the columns of the unitary `basis`, every
    /// outcome followed by input `x_star`.
    pub fn projective(basis: &CMat, s: usize, x_star: usize) -> Self {
        let d = basis.nrows();
        let effects = (0..d)
            .map(|k| {
                let v = basis.column(k);
                &v * v.adjoint()
            })
            .collect();
        Self { effects, p_x_given_gamma: point_masses(s, &vec![x_star; d]) }
    }

    /// Effects from the row blocks of a stacked isometry.
    fn from_stacked(v: &CMat, n_gamma: usize, choice: &[usize], s: usize) -> Self {
        let m = v.nrows() / n_gamma;
        let effects = (0..n_gamma).map(|g| v.rows(g * m, m).into_owned()).collect();
        Self { effects, p_x_given_gamma: point_masses(s, choice) }
    }

    pub fn effects(&self) -> &[CMat] {
        &self.effects
    }

    pub fn n_gamma(&self) -> usize {
        self.effects.len()
    }

    pub fn d_in(&self) -> usize {
        self.effects[0].ncols()
    }

    pub fn d_out(&self) -> usize {
        self.effects[0].nrows()
    }

    pub fn s(&self) -> usize {
        self.p_x_given_gamma.shape()[0]
    }

    /// `P(x|γ)`.
    pub fn p(&self, x: usize, gamma: usize) -> f64 {
        self.p_x_given_gamma.get(&[x, gamma])
    }

    pub fn p_table(&self) -> &ProbTable {
        &self.p_x_given_gamma
    }

    /// `‖Σ E†E − I‖_F`.
    pub fn completeness_residual(&self) -> f64 {
        let d = self.d_in();
        let mut acc = -CMat::identity(d, d);
        for e in &self.effects {
            acc += e.adjoint() * e;
        }
        acc.norm()
    }

    /// Same strategy with zero effects appended up to `n_gamma` outcomes;
    /// the padding outcomes never occur.
    pub fn padded(&self, n_gamma: usize) -> Self {
        let n = self.n_gamma();
        if n_gamma <= n {
            return self.clone();
        }
        let mut effects = self.effects.clone();
        effects.resize(n_gamma, CMat::zeros(self.d_out(), self.d_in()));
        let s = self.s();
        let values = (0..s)
            .flat_map(|x| (0..n_gamma).map(move |g| (x, g)))
            .map(|(x, g)| if g < n { self.p(x, g) } else { (x == 0) as u8 as f64 })
            .collect();
        let table = ProbTable::conditional(vec![s, n_gamma], values).expect("padding keeps normalization");
        Self { effects, p_x_given_gamma: table }
    }

    fn stacked(&self) -> CMat {
        let m = self.d_out();
        let mut v = CMat::zeros(m * self.n_gamma(), self.d_in());
        for (g, e) in self.effects.iter().enumerate() {
            v.rows_mut(g * m, m).copy_from(e);
        }
        v
    }

    /// Strategy on the input side of a deterministic SNIO built from one
    /// strategy per branch on the output side: effects `E_{γ,ω} K_ω`
    /// (outcome `(ω, γ)` flattened as `ω·n_γ + γ`) and input distribution
    /// `Σ_{x_f} P_ω(x_f|γ) P(x|x_f, ω)`.
    pub fn transported(snio: &SnioMap, per_branch: &[StrategyParams]) -> Result<Self> {
        let w = snio.wiring();
        if per_branch.len() != snio.n_branches() {
            return Err(SteeringError::Dimension(format!(
                "{} strategies for {} branches",
                per_branch.len(),
                snio.n_branches()
            )));
        }
        let n_g = per_branch[0].n_gamma();
        let m = per_branch[0].d_out();
        for st in per_branch {
            if st.n_gamma() != n_g || st.d_out() != m || st.d_in() != snio.kraus().d_out() || st.s() != w.s_f() {
                return Err(SteeringError::Dimension("branch strategies do not match the SNIO output".into()));
            }
        }
        let mut effects = Vec::with_capacity(snio.n_branches() * n_g);
        for (omega, st) in per_branch.iter().enumerate() {
            for e in &st.effects {
                effects.push(e * snio.kraus().op(omega));
            }
        }
        let n_total = effects.len();
        let s = w.s();
        let mut values = vec![0.0; s * n_total];
        for (omega, st) in per_branch.iter().enumerate() {
            for g in 0..n_g {
                for x in 0..s {
                    values[x * n_total + omega * n_g + g] =
                        (0..w.s_f()).map(|xf| st.p(xf, g) * w.p_x(x, xf, omega)).sum();
                }
            }
        }
        let table = ProbTable::conditional_from_fn(vec![s, n_total], |i| values[i[0] * n_total + i[1]])?;
        Self::new(effects, table)
    }
}

fn point_masses(s: usize, choice: &[usize]) -> ProbTable {
    let n = choice.len();
    let values = (0..s).flat_map(|x| choice.iter().map(move |&cx| (cx == x) as u8 as f64)).collect::<Vec<_>>();
    debug_assert_eq!(values.len(), s * n);
    ProbTable::conditional(vec![s, n], values).expect("point masses are normalized")
}

fn check_pair(a1: &Assemblage, a2: &Assemblage, strat: &StrategyParams) -> Result<()> {
    if (a1.r(), a1.s(), a1.d()) != (a2.r(), a2.s(), a2.d()) {
        return Err(SteeringError::Dimension("assemblages of different shapes".into()));
    }
    if strat.d_in() != a1.d() || strat.s() != a1.s() {
        return Err(SteeringError::Dimension(format!(
            "strategy acts on d={} with s={}, assemblage has d={} and s={}",
            strat.d_in(),
            strat.s(),
            a1.d(),
            a1.s()
        )));
    }
    Ok(())
}

/// Fixed-strategy assemblage relative entropy, evaluated as
/// `S_C(P_Γ‖P'_Γ) + Σ_{γ,x} P(x|γ) P_Γ(γ) S_Q(post-measurement ρ̂ ‖ ρ̂')`.
pub fn assemblage_relative_entropy(a1: &Assemblage, a2: &Assemblage, strat: &StrategyParams) -> Result<Divergence> {
    check_pair(a1, a2, strat)?;
    let rb1 = a1.bob_marginal();
    let rb2 = a2.bob_marginal();
    let pg: Vec<f64> = strat.effects.iter().map(|e| rb1.conjugate_by(e).trace().max(0.0)).collect();
    let pg2: Vec<f64> = strat.effects.iter().map(|e| rb2.conjugate_by(e).trace().max(0.0)).collect();
    let mut total = kl_divergence(&pg, &pg2);
    if !total.is_finite() {
        return Ok(total);
    }
    for (g, e) in strat.effects.iter().enumerate() {
        if pg[g] <= PROB_TOL {
            continue;
        }
        for x in 0..a1.s() {
            let px = strat.p(x, g);
            if px == 0.0 {
                continue;
            }
            // The post-measurement operator is block diagonal in a.
            let mut block_sum = Divergence::Finite(0.0);
            for a in 0..a1.r() {
                let p = a1.member(a, x).conjugate_by(e).scaled(1.0 / pg[g]);
                let q = a2.member(a, x).conjugate_by(e).scaled(1.0 / pg2[g]);
                block_sum = block_sum + divergence_from_spectra(&p.eig()?, &q.eig()?, ZERO_EIGENVALUE, SUPPORT_TOL);
            }
            total = total + block_sum.weighted(px * pg[g]);
        }
    }
    Ok(total)
}

/// Cooperative cancellation flag shared with long optimizations.
#[derive(Clone, Debug, Default)]
pub struct CancelToken(Arc<AtomicBool>);

impl CancelToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        self.0.store(true, Ordering::Relaxed);
    }

    pub fn is_cancelled(&self) -> bool {
        self.0.load(Ordering::Relaxed)
    }

    fn check(token: &Option<CancelToken>) -> Result<()> {
        match token {
            Some(t) if t.is_cancelled() => Err(SteeringError::Cancelled),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RelEntropyOptions {
    /// Random isometric starting strategies, on top of the structured ones.
    pub n_restarts: usize,
    /// Outcomes of the random strategies; `d²` when `None`.
    pub n_gamma: Option<usize>,
    /// Strategy/assemblage alternations per start.
    pub rounds: usize,
    pub ascent_iters: usize,
    pub ascent_step: f64,
    pub inner_iters: usize,
    /// Frank-Wolfe gap at which the inner minimization stops.
    pub gap_tol: f64,
    pub seed: u64,
    pub mode: ExecMode,
    pub cancel: Option<CancelToken>,
    /// Additional starting strategies, tried first.
    pub extra_strategies: Vec<StrategyParams>,
    /// Starting `ω_λ` for the LHS side (normalized, enumeration order).
    pub warm_start: Option<Vec<HermitianMatrix>>,
}

impl Default for RelEntropyOptions {
    fn default() -> Self {
        Self {
            n_restarts: 2,
            n_gamma: None,
            rounds: 3,
            ascent_iters: 30,
            ascent_step: 0.5,
            inner_iters: 300,
            gap_tol: 1e-7,
            seed: 0,
            mode: ExecMode::default(),
            cancel: None,
            extra_strategies: Vec::new(),
            warm_start: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelEntropyStatus {
    Converged,
    /// The inner minimization stopped with a Frank-Wolfe gap above tolerance;
    /// the lower bound is still valid.
    GapAboveTolerance,
}

#[derive(Clone, Debug)]
pub struct RelEntropyEstimate {
    /// Certified: `min_σ` of the fixed-strategy objective is at least this.
    pub lower_bound: f64,
    /// Objective at the alternating-optimization fixed point.
    pub heuristic_value: f64,
    pub strategy: StrategyParams,
    pub closest_lhs: Assemblage,
    /// `ω_λ` of `closest_lhs`.
    pub closest_omegas: Vec<HermitianMatrix>,
    pub restarts_used: usize,
    pub status: RelEntropyStatus,
}

/// `V diag(f(λ)) V†` with the divided differences of `log`: the Fréchet
/// derivative `D log(B)[A]` at the (shifted) spectrum of `B`.
fn log_derivative(b: &Spectrum, a: &CMat) -> CMat {
    let v = &b.eigenvectors;
    let lam: Vec<f64> = b.eigenvalues.iter().map(|x| x.max(0.0) + LOG_REG).collect();
    let mut t = v.adjoint() * a * v;
    let n = lam.len();
    for i in 0..n {
        for j in 0..n {
            let (x, y) = (lam[i], lam[j]);
            let dd = if (x - y).abs() <= 1e-6 * x.min(y) { 2.0 / (x + y) } else { (x / y).ln() / (x - y) };
            t[(i, j)] *= c(dd, 0.0);
        }
    }
    v * t * v.adjoint()
}

fn regularized_log(sp: &Spectrum) -> CMat {
    sp.map(|l| (l.max(0.0) + LOG_REG).ln()).into_matrix()
}

fn herm(m: CMat) -> HermitianMatrix {
    HermitianMatrix::from_matrix_symmetrized(m)
}

/// One `(γ, x, a)` contribution with a fixed `A = E ρ(a,x) E†`.
struct FixedTerm {
    gamma: usize,
    member: usize,
    weight: f64,
    a: CMat,
    a_spec: Spectrum,
}

/// The fixed-strategy objective as a function of `σ` alone.
struct InnerProblem<'a> {
    r: usize,
    s: usize,
    d: usize,
    strat: &'a StrategyParams,
    terms: Vec<FixedTerm>,
    strategies: &'a [DeterministicStrategy],
}

struct InnerResult {
    omegas: Vec<HermitianMatrix>,
    primal: f64,
    lower: f64,
    gap: f64,
}

impl<'a> InnerProblem<'a> {
    fn new(rho: &Assemblage, strat: &'a StrategyParams, strategies: &'a [DeterministicStrategy]) -> Result<Self> {
        let mut terms = Vec::new();
        for (g, e) in strat.effects.iter().enumerate() {
            for x in 0..rho.s() {
                let w = strat.p(x, g);
                if w == 0.0 {
                    continue;
                }
                for a in 0..rho.r() {
                    let am = rho.member(a, x).conjugate_by(e);
                    if am.trace() <= 1e-15 {
                        continue;
                    }
                    let a_spec = am.eig()?;
                    terms.push(FixedTerm { gamma: g, member: x * rho.r() + a, weight: w, a: am.into_matrix(), a_spec });
                }
            }
        }
        Ok(Self { r: rho.r(), s: rho.s(), d: rho.d(), strat, terms, strategies })
    }

    fn members(&self, omegas: &[HermitianMatrix]) -> Result<Vec<HermitianMatrix>> {
        Ok(assemble_decomposition(self.r, self.s, self.d, self.strategies, omegas)?.members().to_vec())
    }

    fn value(&self, sigma: &[HermitianMatrix]) -> Result<Divergence> {
        let mut total = Divergence::Finite(0.0);
        for t in &self.terms {
            let b = sigma[t.member].conjugate_by(&self.strat.effects[t.gamma]);
            let dv = divergence_from_spectra(&t.a_spec, &b.eig()?, ZERO_EIGENVALUE, SUPPORT_TOL);
            total = total + dv.weighted(t.weight);
            if !total.is_finite() {
                break;
            }
        }
        Ok(total)
    }

    /// Value and gradient with respect to each member `σ(a,x)`.
    fn value_grad(&self, sigma: &[HermitianMatrix]) -> Result<(Divergence, Vec<CMat>)> {
        let mut grads = vec![CMat::zeros(self.d, self.d); sigma.len()];
        let mut total = Divergence::Finite(0.0);
        for t in &self.terms {
            let e = &self.strat.effects[t.gamma];
            let b_spec = sigma[t.member].conjugate_by(e).eig()?;
            total = total + divergence_from_spectra(&t.a_spec, &b_spec, ZERO_EIGENVALUE, SUPPORT_TOL).weighted(t.weight);
            grads[t.member] -= e.adjoint() * log_derivative(&b_spec, &t.a) * e * c(t.weight, 0.0);
        }
        Ok((total, grads))
    }

    fn lambda_grads(&self, member_grads: &[CMat]) -> Vec<HermitianMatrix> {
        self.strategies
            .iter()
            .map(|st| {
                let mut g = CMat::zeros(self.d, self.d);
                for x in 0..self.s {
                    g += &member_grads[x * self.r + st.response()[x]];
                }
                herm(g)
            })
            .collect()
    }

    /// Entropic mirror descent over `{ω_λ ⪰ 0, Σ Tr ω_λ = 1}` with a
    /// backtracking step; the Frank-Wolfe gap certifies the lower bound.
    fn minimize(&self, start: &[HermitianMatrix], iters: usize, gap_tol: f64, cancel: &Option<CancelToken>) -> Result<InnerResult> {
        let mut noise = 0.0;
        let (mut logs, mut omegas, mut f, mut mg) = loop {
            let mixed = with_noise(start, noise);
            let logs: Vec<HermitianMatrix> =
                mixed.iter().map(|w| w.eig().map(|sp| sp.map(|l| l.max(1e-300).ln()))).collect::<Result<_>>()?;
            let omegas = omegas_from_logs(&logs)?;
            let (f, mg) = self.value_grad(&self.members(&omegas)?)?;
            if f.is_finite() {
                break (logs, omegas, f, mg);
            }
            noise = if noise == 0.0 { 1e-6 } else { noise * 100.0 };
            if noise > 1.0 {
                return Err(SteeringError::Internal("relative entropy start point has infinite objective".into()));
            }
        };
        let mut fv = f.to_f64();
        let mut step = 1.0;
        let mut gap = f64::INFINITY;
        for _ in 0..=iters {
            CancelToken::check(cancel)?;
            let lg = self.lambda_grads(&mg);
            let inner: f64 = lg.iter().zip(&omegas).map(|(g, w)| g.inner(w)).sum();
            let mut lin_min = f64::INFINITY;
            for g in &lg {
                lin_min = lin_min.min(g.min_eigenvalue()?);
            }
            gap = (inner - lin_min).max(0.0);
            if gap <= gap_tol {
                break;
            }
            let mut accepted = false;
            while step > 1e-14 {
                let trial_logs: Vec<HermitianMatrix> =
                    logs.iter().zip(&lg).map(|(h, g)| h - &g.scaled(step)).collect();
                let trial = omegas_from_logs(&trial_logs)?;
                let (tf, tg) = self.value_grad(&self.members(&trial)?)?;
                if let Divergence::Finite(tv) = tf {
                    if tv <= fv {
                        logs = trial_logs;
                        omegas = trial;
                        f = tf;
                        fv = tv;
                        mg = tg;
                        accepted = true;
                        step *= 1.5;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        let _ = f;
        Ok(InnerResult { omegas, primal: fv, lower: fv - gap, gap })
    }
}

/// `(1−t) ω_λ + t·I/(d·n_λ)` after clipping negative eigenvalues.
fn with_noise(omegas: &[HermitianMatrix], t: f64) -> Vec<HermitianMatrix> {
    let d = omegas[0].dim();
    let flat = HermitianMatrix::maximally_mixed(d).scaled(1.0 / omegas.len() as f64);
    let clipped: Vec<HermitianMatrix> =
        omegas.iter().map(|w| w.eig().map(|sp| sp.map(|l| l.max(0.0))).unwrap_or_else(|_| w.clone())).collect();
    let total: f64 = clipped.iter().map(|w| w.trace()).sum();
    let t = if total > 0.0 { t } else { 1.0 };
    clipped
        .iter()
        .map(|w| {
            let scaled = if total > 0.0 { w.scaled((1.0 - t) / total) } else { HermitianMatrix::zeros(d) };
            &scaled + &flat.scaled(t)
        })
        .collect()
}

fn omegas_from_logs(logs: &[HermitianMatrix]) -> Result<Vec<HermitianMatrix>> {
    let specs = logs.iter().map(|h| h.eig()).collect::<Result<Vec<_>>>()?;
    let top = specs.iter().map(|s| s.max()).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<HermitianMatrix> = specs.iter().map(|s| s.map(|l| (l - top).exp())).collect();
    let total: f64 = exps.iter().map(|w| w.trace()).sum();
    Ok(exps.into_iter().map(|w| w.scaled(1.0 / total)).collect())
}

/// Value of `Σ_x P(x|γ) Σ_a Tr A(log A − log B)` per `(γ, x)` and its
/// gradient with respect to `E_γ`.
fn strategy_terms(
    rho: &Assemblage,
    sigma: &Assemblage,
    effects: &[CMat],
) -> Result<(Vec<Vec<Divergence>>, Vec<Vec<CMat>>)> {
    let (r, s) = (rho.r(), rho.s());
    let mut values = Vec::with_capacity(effects.len());
    let mut grads = Vec::with_capacity(effects.len());
    for e in effects {
        let mut vrow = Vec::with_capacity(s);
        let mut grow = Vec::with_capacity(s);
        for x in 0..s {
            let mut v = Divergence::Finite(0.0);
            let mut g = CMat::zeros(e.nrows(), e.ncols());
            for a in 0..r {
                let rm = rho.member(a, x).matrix();
                let sm = sigma.member(a, x).matrix();
                let am = herm(e * rm * e.adjoint());
                let bm = herm(e * sm * e.adjoint());
                let asp = am.eig()?;
                let bsp = bm.eig()?;
                v = v + divergence_from_spectra(&asp, &bsp, ZERO_EIGENVALUE, SUPPORT_TOL);
                let m = e.nrows();
                let left = regularized_log(&asp) + CMat::identity(m, m) - regularized_log(&bsp);
                g += (left * e * rm - log_derivative(&bsp, am.matrix()) * e * sm) * c(2.0, 0.0);
            }
            vrow.push(v);
            grow.push(g);
        }
        values.push(vrow);
        grads.push(grow);
    }
    Ok((values, grads))
}

fn best_inputs(values: &[Vec<Divergence>]) -> (Divergence, Vec<usize>) {
    let mut total = Divergence::Finite(0.0);
    let mut choice = Vec::with_capacity(values.len());
    for row in values {
        let (x, v) = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.to_f64().total_cmp(&b.1.to_f64()))
            .expect("at least one input");
        choice.push(x);
        total = total + *v;
    }
    (total, choice)
}

/// Polar factor `M (M†M)^{-1/2}`.
fn polar(m: &CMat) -> Result<Option<CMat>> {
    let gram = herm(m.adjoint() * m).eig()?;
    if gram.min() <= 1e-14 {
        return Ok(None);
    }
    Ok(Some(m * gram.map(|l| 1.0 / l.sqrt()).into_matrix()))
}

/// Projected ascent on the stacked isometry `[E_1; …; E_n]` with a polar
/// retraction; inputs are re-chosen greedily at every step.
fn ascend_strategy(
    rho: &Assemblage,
    sigma: &Assemblage,
    start: &StrategyParams,
    iters: usize,
    step0: f64,
    cancel: &Option<CancelToken>,
) -> Result<(Divergence, StrategyParams)> {
    let n = start.n_gamma();
    let m = start.d_out();
    let s = rho.s();
    let mut v = start.stacked();
    let (vals, mut grads) = strategy_terms(rho, sigma, start.effects())?;
    let (mut best, mut choice) = best_inputs(&vals);
    // A start that is not greedy in x may be beaten by its own greedy
    // version; keep the literal start only if it is better.
    let literal = fixed_value(&vals, start);
    let mut current = if literal.to_f64() > best.to_f64() { start.clone() } else { StrategyParams::from_stacked(&v, n, &choice, s) };
    if literal.to_f64() > best.to_f64() {
        best = literal;
    }
    let mut step = step0;
    for _ in 0..iters {
        CancelToken::check(cancel)?;
        if !best.is_finite() {
            break;
        }
        let mut gstack = CMat::zeros(n * m, v.ncols());
        for g in 0..n {
            gstack.rows_mut(g * m, m).copy_from(&grads[g][choice[g]]);
        }
        let mut improved = false;
        while step > 1e-10 {
            if let Some(trial) = polar(&(&v + &gstack * c(step, 0.0)))? {
                let effects: Vec<CMat> = (0..n).map(|g| trial.rows(g * m, m).into_owned()).collect();
                let (tv, tg) = strategy_terms(rho, sigma, &effects)?;
                let (tb, tc) = best_inputs(&tv);
                if tb.is_finite() && tb.to_f64() > best.to_f64() {
                    v = trial;
                    grads = tg;
                    best = tb;
                    choice = tc;
                    current = StrategyParams::from_stacked(&v, n, &choice, s);
                    improved = true;
                    step *= 1.5;
                    break;
                }
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok((best, current))
}

fn fixed_value(vals: &[Vec<Divergence>], strat: &StrategyParams) -> Divergence {
    vals.iter()
        .enumerate()
        .flat_map(|(g, row)| row.iter().enumerate().map(move |(x, v)| v.weighted(strat.p(x, g))))
        .sum()
}

fn haar_strategy<R: Rng + ?Sized>(d: usize, s: usize, n_gamma: usize, rng: &mut R) -> StrategyParams {
    let v = random::haar_isometry(n_gamma * d, d, rng);
    let choice: Vec<usize> = (0..n_gamma).map(|_| rng.random_range(0..s)).collect();
    StrategyParams::from_stacked(&v, n_gamma, &choice, s)
}

/// Trivial and projective strategies built from the assemblage itself.
fn structured_strategies(ass: &Assemblage) -> Result<Vec<StrategyParams>> {
    let mut out = Vec::new();
    for x in 0..ass.s() {
        out.push(StrategyParams::trivial(ass.d(), ass.s(), x));
        let basis = ass.member(0, x).eig()?.eigenvectors;
        for x_star in 0..ass.s() {
            out.push(StrategyParams::projective(&basis, ass.s(), x_star));
        }
    }
    Ok(out)
}

/// Best-of-restarts lower estimate of `S_A(a1‖a2)`: every start is
/// improved by projected ascent and the best fixed-strategy value wins.
pub fn maximize_strategy(a1: &Assemblage, a2: &Assemblage, opts: &RelEntropyOptions) -> Result<(f64, StrategyParams)> {
    let mut starts = opts.extra_strategies.clone();
    starts.extend(structured_strategies(a1)?);
    let n_gamma = opts.n_gamma.unwrap_or(a1.d() * a1.d());
    for i in 0..opts.n_restarts {
        let mut rng = random::rng_from_seed(random::derive_seed(opts.seed, "strategy", i as u64));
        starts.push(haar_strategy(a1.d(), a1.s(), n_gamma, &mut rng));
    }
    for st in &starts {
        check_pair(a1, a2, st)?;
    }
    let results = par::map_indexed(starts.len(), opts.mode, |i| {
        ascend_strategy(a1, a2, &starts[i], opts.ascent_iters, opts.ascent_step, &opts.cancel)
    });
    let mut best: Option<(f64, StrategyParams)> = None;
    for res in results {
        let (v, st) = res?;
        let v = v.to_f64();
        if best.as_ref().is_none_or(|(b, _)| v > *b) {
            best = Some((v, st));
        }
    }
    Ok(best.expect("at least one start"))
}

struct RestartOutcome {
    inner: InnerResult,
    strategy: StrategyParams,
}

fn run_restart(
    rho: &Assemblage,
    strategies: &[DeterministicStrategy],
    warm: &[HermitianMatrix],
    start: &StrategyParams,
    opts: &RelEntropyOptions,
) -> Result<RestartOutcome> {
    let mut strat = start.clone();
    let mut inner = InnerProblem::new(rho, &strat, strategies)?.minimize(warm, opts.inner_iters, opts.gap_tol, &opts.cancel)?;
    for _ in 0..opts.rounds {
        let sigma = assemble_decomposition(rho.r(), rho.s(), rho.d(), strategies, &inner.omegas)?;
        let (_, next) = ascend_strategy(rho, &sigma, &strat, opts.ascent_iters, opts.ascent_step, &opts.cancel)?;
        let res = InnerProblem::new(rho, &next, strategies)?.minimize(&inner.omegas, opts.inner_iters, opts.gap_tol, &opts.cancel)?;
        let stalled = (res.lower - inner.lower).abs() <= 1e-9;
        if res.lower >= inner.lower {
            strat = next;
            inner = res;
        }
        if stalled {
            break;
        }
    }
    Ok(RestartOutcome { inner, strategy: strat })
}

/// Default starting point for the LHS side: the optimal robustness
/// decomposition mixed with a little white noise so every `ω_λ` is full
/// rank.
fn warm_start(ass: &Assemblage, strategies: &[DeterministicStrategy]) -> Result<Vec<HermitianMatrix>> {
    match super::robustness_omegas(ass) {
        Ok(w) => {
            let nu: f64 = w.iter().map(|x| x.trace()).sum::<f64>() - 1.0;
            Ok(with_noise(&w, if nu < 1e-6 { 1e-8 } else { 1e-3 }))
        }
        Err(_) => Ok(with_noise(&vec![HermitianMatrix::zeros(ass.d()); strategies.len()], 1.0)),
    }
}

/// Relative entropy of steering, reported as a certified lower bound and
/// the alternating-optimization value.
pub fn relative_entropy_of_steering(ass: &Assemblage, opts: &RelEntropyOptions) -> Result<RelEntropyEstimate> {
    ass.validate()?;
    if (ass.trace() - 1.0).abs() > 1e-8 {
        return Err(SteeringError::Precondition(format!("assemblage has trace {}", ass.trace())));
    }
    let strategies = enumerate_deterministic_strategies(ass.r(), ass.s())?;
    let warm = match &opts.warm_start {
        Some(w) if w.len() == strategies.len() => w.clone(),
        Some(_) => return Err(SteeringError::Dimension("warm start has the wrong number of ω_λ".into())),
        None => warm_start(ass, &strategies)?,
    };
    let mut starts = opts.extra_strategies.clone();
    starts.extend(structured_strategies(ass)?);
    let n_gamma = opts.n_gamma.unwrap_or(ass.d() * ass.d());
    for i in 0..opts.n_restarts {
        let mut rng = random::rng_from_seed(random::derive_seed(opts.seed, "strategy", i as u64));
        starts.push(haar_strategy(ass.d(), ass.s(), n_gamma, &mut rng));
    }
    for st in &starts {
        check_pair(ass, ass, st)?;
    }
    let outcomes = par::map_indexed(starts.len(), opts.mode, |i| run_restart(ass, &strategies, &warm, &starts[i], opts));
    let mut best: Option<RestartOutcome> = None;
    for o in outcomes {
        let o = o?;
        if best.as_ref().is_none_or(|b| o.inner.lower > b.inner.lower) {
            best = Some(o);
        }
    }
    let best = best.expect("at least one start");
    let closest_lhs = assemble_decomposition(ass.r(), ass.s(), ass.d(), &strategies, &best.inner.omegas)?;
    Ok(RelEntropyEstimate {
        lower_bound: best.inner.lower,
        heuristic_value: best.inner.primal,
        status: if best.inner.gap <= opts.gap_tol {
            RelEntropyStatus::Converged
        } else {
            RelEntropyStatus::GapAboveTolerance
        },
        strategy: best.strategy,
        closest_lhs,
        closest_omegas: best.inner.omegas,
        restarts_used: starts.len(),
    })
}

/// Fixed-strategy inner problem `min_{σ ∈ LHS}` for one strategy: returns
/// `(primal value, certified lower bound, minimizing ω_λ)`.
pub fn minimize_over_lhs(
    ass: &Assemblage,
    strat: &StrategyParams,
    opts: &RelEntropyOptions,
) -> Result<(f64, f64, Vec<HermitianMatrix>)> {
    check_pair(ass, ass, strat)?;
    let strategies = enumerate_deterministic_strategies(ass.r(), ass.s())?;
    let warm = match &opts.warm_start {
        Some(w) => w.clone(),
        None => warm_start(ass, &strategies)?,
    };
    let problem = InnerProblem::new(ass, strat, &strategies)?;
    let res = problem.minimize(&warm, opts.inner_iters, opts.gap_tol, &opts.cancel)?;
    Ok((res.primal, res.lower, res.omegas))
}

/// Jointly convex form used by the optimizers; agrees with
/// [`assemblage_relative_entropy`] on no-signaling pairs.
pub fn fixed_strategy_objective(a1: &Assemblage, a2: &Assemblage, strat: &StrategyParams) -> Result<Divergence> {
    check_pair(a1, a2, strat)?;
    let strategies = enumerate_deterministic_strategies(a1.r(), a1.s())?;
    InnerProblem::new(a1, strat, &strategies)?.value(a2.members())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assemblage::singlet_xz;
    use crate::lhs::LhsModel;
    use crate::random::rng_from_seed;

    fn random_pair(seed: u64) -> (Assemblage, Assemblage) {
        let mut rng = rng_from_seed(seed);
        let noise = Assemblage::from_fn(2, 2, 2, |_, _| HermitianMatrix::maximally_mixed(2).scaled(0.5)).unwrap();
        let a = LhsModel::random(2, 2, 2, &mut rng).assemble().unwrap();
        let b = LhsModel::random(2, 2, 2, &mut rng).assemble().unwrap();
        (Assemblage::mix(&a, &noise, 0.9).unwrap(), Assemblage::mix(&b, &noise, 0.9).unwrap())
    }

    #[test]
    fn literal_and_convex_forms_agree() {
        for seed in 0..10 {
            let (a, b) = random_pair(seed);
            let mut rng = rng_from_seed(100 + seed);
            let st = haar_strategy(2, 2, 4, &mut rng);
            let lit = assemblage_relative_entropy(&a, &b, &st).unwrap().to_f64();
            let cvx = fixed_strategy_objective(&a, &b, &st).unwrap().to_f64();
            assert!((lit - cvx).abs() < 1e-10, "{lit} vs {cvx}");
        }
    }

    #[test]
    fn identical_arguments_give_zero() {
        let (a, _) = random_pair(3);
        let st = haar_strategy(2, 2, 4, &mut rng_from_seed(1));
        assert!(assemblage_relative_entropy(&a, &a, &st).unwrap().to_f64().abs() < 1e-12);
        let (v, _) = maximize_strategy(&a, &a, &RelEntropyOptions::default()).unwrap();
        assert!(v.abs() < 1e-10);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (a, b) = random_pair(7);
        let st = haar_strategy(2, 2, 4, &mut rng_from_seed(2));
        let strategies = enumerate_deterministic_strategies(2, 2).unwrap();
        let p = InnerProblem::new(&a, &st, &strategies).unwrap();
        let (_, g) = p.value_grad(b.members()).unwrap();
        let dir = random::random_hermitian(2, &mut rng_from_seed(3));
        let h = 1e-6;
        let mut plus = b.members().to_vec();
        let mut minus = b.members().to_vec();
        plus[1] = &plus[1] + &dir.scaled(h);
        minus[1] = &minus[1] - &dir.scaled(h);
        let fd = (p.value(&plus).unwrap().to_f64() - p.value(&minus).unwrap().to_f64()) / (2.0 * h);
        let an = herm(g[1].clone()).inner(&dir);
        assert!((fd - an).abs() < 1e-6, "{fd} vs {an}");
    }

    #[test]
    fn strategy_gradient_matches_finite_differences() {
        let (a, b) = random_pair(8);
        let e = random::ginibre(2, 2, &mut rng_from_seed(4));
        let (v0, g) = strategy_terms(&a, &b, std::slice::from_ref(&e)).unwrap();
        let dir = random::ginibre(2, 2, &mut rng_from_seed(5));
        let h = 1e-6;
        let ep = &e + &dir * c(h, 0.0);
        let em = &e - &dir * c(h, 0.0);
        let (vp, _) = strategy_terms(&a, &b, &[ep]).unwrap();
        let (vm, _) = strategy_terms(&a, &b, &[em]).unwrap();
        let fd = (vp[0][1].to_f64() - vm[0][1].to_f64()) / (2.0 * h);
        let an = (g[0][1].adjoint() * &dir).trace().re;
        assert!((fd - an).abs() < 1e-5, "{fd} vs {an}, base {:?}", v0[0][1]);
    }

    #[test]
    fn singlet_has_positive_lower_bound() {
        let est = relative_entropy_of_steering(&singlet_xz(), &RelEntropyOptions::default()).unwrap();
        assert!(est.lower_bound > 0.01, "{}", est.lower_bound);
        assert!(est.lower_bound <= est.heuristic_value + 1e-9);
    }

    #[test]
    fn lhs_inputs_are_near_zero() {
        for seed in 0..5 {
            let (a, _) = random_pair(seed + 20);
            let est = relative_entropy_of_steering(&a, &RelEntropyOptions::default()).unwrap();
            assert!(est.heuristic_value <= 1e-5 && est.lower_bound <= 1e-5, "{est:?}");
        }
    }

    #[test]
    fn cancellation_is_reported() {
        let token = CancelToken::new();
        token.cancel();
        let opts = RelEntropyOptions { cancel: Some(token), ..Default::default() };
        assert!(matches!(relative_entropy_of_steering(&singlet_xz(), &opts), Err(SteeringError::Cancelled)));
    }
}
