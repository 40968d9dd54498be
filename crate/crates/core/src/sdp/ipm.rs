//! Primal-dual interior-point method on the homogeneous self-dual embedding
//! of
//!
//! ```text
//!     minimize c'x   subject to  Gx + s = h,  Ax = b,  s ∈ K
//! ```
//!
//! where `K` is a product of Hermitian PSD cones in svec coordinates. Steps
//! use Nesterov-Todd scaling and Mehrotra's predictor-corrector. Redundant
//! equality rows are removed up front by an SVD.

use nalgebra::{DMatrix, DVector};

use super::svec::{diagonal_positions, smat, svec_into};
use super::{Relation, SdpProblem, SdpSolution, Sense, SolveOptions, SolveStatus, Term};
use crate::linalg::{c, CMat, HermitianMatrix};

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Complementarity measure `(⟨s,z⟩ + τκ)/(ν+1)`.
    pub mu: f64,
}

pub(crate) struct Cones {
    dims: Vec<usize>,
    offsets: Vec<usize>,
    len: usize,
}

impl Cones {
    fn new(dims: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(dims.len());
        let mut len = 0;
        for d in &dims {
            offsets.push(len);
            len += d * d;
        }
        Self { dims, offsets, len }
    }

    fn count(&self) -> usize {
        self.dims.len()
    }

    fn degree(&self) -> usize {
        self.dims.iter().sum()
    }

    fn range(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k]..self.offsets[k] + self.dims[k] * self.dims[k]
    }

    fn mat(&self, v: &DVector<f64>, k: usize) -> CMat {
        smat(&v.as_slice()[self.range(k)], self.dims[k])
    }

    fn put(&self, v: &mut DVector<f64>, k: usize, m: &CMat) {
        let r = self.range(k);
        svec_into(m, &mut v.as_mut_slice()[r]);
    }

    fn map<F: Fn(usize, CMat) -> CMat>(&self, v: &DVector<f64>, f: F) -> DVector<f64> {
        let mut out = DVector::zeros(self.len);
        for k in 0..self.count() {
            let m = f(k, self.mat(v, k));
            self.put(&mut out, k, &m);
        }
        out
    }

    fn identity(&self) -> DVector<f64> {
        let mut e = DVector::zeros(self.len);
        for k in 0..self.count() {
            for i in diagonal_positions(self.dims[k]) {
                e[self.offsets[k] + i] = 1.0;
            }
        }
        e
    }

    fn min_eigenvalue(&self, v: &DVector<f64>) -> f64 {
        (0..self.count())
            .map(|k| min_eig(&self.mat(v, k)))
            .fold(f64::INFINITY, f64::min)
    }
}

fn min_eig(m: &CMat) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)].re;
    }
    HermitianMatrix::from_matrix_symmetrized(m.clone())
        .min_eigenvalue()
        .unwrap_or(f64::NEG_INFINITY)
}

#[derive(Clone, Copy)]
enum Slot {
    Cone(usize),
    Eq { row: usize, dim: usize },
}

pub(crate) struct ConicForm {
    c: DVector<f64>,
    g: DMatrix<f64>,
    h: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    cones: Cones,
    var_offsets: Vec<usize>,
    slots: Vec<Slot>,
    sign: f64,
}

pub(crate) struct RawResult {
    status: SolveStatus,
    x: DVector<f64>,
    y: DVector<f64>,
    z: DVector<f64>,
    pres: f64,
    dres: f64,
    gap: f64,
    dcost: f64,
    iterations: usize,
    trace: Vec<TraceRow>,
}

impl ConicForm {
    pub(crate) fn from_problem(p: &SdpProblem) -> Self {
        let mut var_offsets = Vec::with_capacity(p.blocks.len());
        let mut n = 0;
        for b in &p.blocks {
            var_offsets.push(n);
            n += b.dim * b.dim;
        }
        let mut cone_dims: Vec<usize> = p.blocks.iter().map(|b| b.dim).collect();
        let mut slots = Vec::with_capacity(p.constraints.len());
        let mut eq_rows = 0;
        for con in &p.constraints {
            let d = con.rhs.dim();
            match con.relation {
                Relation::Eq => {
                    slots.push(Slot::Eq { row: eq_rows, dim: d });
                    eq_rows += d * d;
                }
                _ => {
                    slots.push(Slot::Cone(cone_dims.len()));
                    cone_dims.push(d);
                }
            }
        }
        let cones = Cones::new(cone_dims);
        let mut g = DMatrix::zeros(cones.len, n);
        let mut h = DVector::zeros(cones.len);
        let mut a = DMatrix::zeros(eq_rows, n);
        let mut b = DVector::zeros(eq_rows);

        for (k, blk) in p.blocks.iter().enumerate() {
            let off = cones.offsets[k];
            for i in 0..blk.dim * blk.dim {
                g[(off + i, var_offsets[k] + i)] = -1.0;
            }
        }
        for (con, slot) in p.constraints.iter().zip(&slots) {
            let d = con.rhs.dim();
            let mut rhs = vec![0.0; d * d];
            svec_into(con.rhs.matrix(), &mut rhs);
            let (mat, vec, row, sgn) = match (*slot, con.relation) {
                (Slot::Cone(k), Relation::Leq) => (&mut g, &mut h, cones.offsets[k], 1.0),
                (Slot::Cone(k), _) => (&mut g, &mut h, cones.offsets[k], -1.0),
                (Slot::Eq { row, .. }, _) => (&mut a, &mut b, row, 1.0),
            };
            for (i, v) in rhs.iter().enumerate() {
                vec[row + i] = sgn * v;
            }
            for t in &con.terms {
                match *t {
                    Term::Scaled { block, coeff } => {
                        for i in 0..d * d {
                            mat[(row + i, var_offsets[block] + i)] += sgn * coeff;
                        }
                    }
                    Term::Trace { block, coeff } => {
                        for i in diagonal_positions(p.blocks[block].dim) {
                            mat[(row, var_offsets[block] + i)] += sgn * coeff;
                        }
                    }
                }
            }
        }

        let sign = match p.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut cvec = DVector::zeros(n);
        for (k, cost) in p.objective.iter().enumerate() {
            if let Some(cost) = cost {
                let d = p.blocks[k].dim;
                svec_into(cost.matrix(), &mut cvec.as_mut_slice()[var_offsets[k]..var_offsets[k] + d * d]);
            }
        }
        cvec *= sign;
        Self { c: cvec, g, h, a, b, cones, var_offsets, slots, sign }
    }

    pub(crate) fn recover(&self, p: &SdpProblem, raw: RawResult) -> SdpSolution {
        let blocks: Vec<HermitianMatrix> = p
            .blocks
            .iter()
            .enumerate()
            .map(|(k, blk)| {
                let off = self.var_offsets[k];
                let d = blk.dim;
                HermitianMatrix::from_matrix_symmetrized(smat(&raw.x.as_slice()[off..off + d * d], d))
            })
            .collect();
        let duals = self
            .slots
            .iter()
            .map(|slot| match *slot {
                Slot::Cone(k) => HermitianMatrix::from_matrix_symmetrized(self.cones.mat(&raw.z, k)),
                Slot::Eq { row, dim } => {
                    HermitianMatrix::from_matrix_symmetrized(smat(&raw.y.as_slice()[row..row + dim * dim], dim))
                }
            })
            .collect();
        let trace = raw
            .trace
            .into_iter()
            .map(|row| TraceRow { objective: self.sign * row.objective + p.offset, ..row })
            .collect();
        SdpSolution {
            status: raw.status,
            objective: p.objective_value(&blocks),
            dual_objective: self.sign * raw.dcost + p.offset,
            blocks,
            duals,
            primal_residual: raw.pres,
            dual_residual: raw.dres,
            gap: raw.gap,
            iterations: raw.iterations,
            trace,
        }
    }
}

/// Nesterov-Todd scaling of one cone: `W z = R† z R`, `W^{-T} s = R⁻¹ s R^{-†}`,
/// both equal to `diag(λ)`.
struct Scaling {
    r: CMat,
    rinv: CMat,
    /// `R R†`, so that `H v = Q v Q`.
    q: CMat,
    lam: Vec<f64>,
}

impl Scaling {
    fn new(s: &CMat, z: &CMat) -> Option<Self> {
        let d = s.nrows();
        let l1 = s.clone().cholesky()?.l();
        let l2 = z.clone().cholesky()?.l();
        let svd = (l2.adjoint() * &l1).svd(true, true);
        let lam: Vec<f64> = svd.singular_values.iter().copied().collect();
        if lam.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return None;
        }
        let v = svd.v_t?.adjoint();
        let mut r = &l1 * &v;
        for (j, l) in lam.iter().enumerate() {
            let f = 1.0 / l.sqrt();
            r.column_mut(j).iter_mut().for_each(|e| *e *= f);
        }
        let l1inv = l1.solve_lower_triangular(&CMat::identity(d, d))?;
        let mut rinv = v.adjoint() * l1inv;
        for (i, l) in lam.iter().enumerate() {
            let f = l.sqrt();
            rinv.row_mut(i).iter_mut().for_each(|e| *e *= f);
        }
        let q = &r * r.adjoint();
        Some(Self { r, rinv, q, lam })
    }

    fn w(&self, z: &CMat) -> CMat {
        self.r.adjoint() * z * &self.r
    }

    fn wt(&self, u: &CMat) -> CMat {
        &self.r * u * self.r.adjoint()
    }

    fn winvt(&self, s: &CMat) -> CMat {
        &self.rinv * s * self.rinv.adjoint()
    }

    fn winv(&self, u: &CMat) -> CMat {
        self.rinv.adjoint() * u * &self.rinv
    }

    fn h(&self, v: &CMat) -> CMat {
        &self.q * v * &self.q
    }

    /// Solves `λ ∘ u = d` for `u`.
    fn lam_div(&self, d: &CMat) -> CMat {
        CMat::from_fn(d.nrows(), d.ncols(), |i, j| d[(i, j)] * (2.0 / (self.lam[i] + self.lam[j])))
    }

    fn lam_sq(&self) -> CMat {
        let n = self.lam.len();
        CMat::from_fn(n, n, |i, j| if i == j { c(self.lam[i] * self.lam[i], 0.0) } else { c(0.0, 0.0) })
    }

    /// Largest `α` with `diag(λ) + α·m ⪰ 0` (infinite if none binds).
    fn max_step(&self, m: &CMat) -> f64 {
        let n = self.lam.len();
        let scaled = CMat::from_fn(n, n, |i, j| m[(i, j)] / (self.lam[i] * self.lam[j]).sqrt());
        let lmin = min_eig(&scaled);
        if lmin < 0.0 {
            -1.0 / lmin
        } else {
            f64::INFINITY
        }
    }
}

fn circ(a: &CMat, b: &CMat) -> CMat {
    (a * b + b * a) * c(0.5, 0.0)
}

struct Equalities {
    a: DMatrix<f64>,
    b: DVector<f64>,
    /// Maps reduced multipliers back to the original rows.
    u: DMatrix<f64>,
    /// `A⁺` (n×p) and `(A')⁺` (p×n) of the reduced system.
    pinv: DMatrix<f64>,
    pinv_t: DMatrix<f64>,
    /// Orthonormal basis of the null space of `A` (n×(n−p)).
    null: DMatrix<f64>,
}

/// Row-compresses `Ax = b` to full row rank; `None` if inconsistent.
fn reduce_equalities(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<Equalities> {
    let (p, n) = a.shape();
    if p == 0 {
        return Some(Equalities {
            a: DMatrix::zeros(0, n),
            b: DVector::zeros(0),
            u: DMatrix::zeros(0, 0),
            pinv: DMatrix::zeros(n, 0),
            pinv_t: DMatrix::zeros(0, n),
            null: DMatrix::identity(n, n),
        });
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let tol = smax * 1e-12 * (p.max(n) as f64);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > tol && svd.singular_values[i] > 0.0)
        .collect();
    let rank = keep.len();
    let mut ur = DMatrix::zeros(p, rank);
    let mut vr = DMatrix::zeros(rank, n);
    let mut sv = Vec::with_capacity(rank);
    for (k, &i) in keep.iter().enumerate() {
        ur.set_column(k, &u.column(i));
        vr.set_row(k, &vt.row(i));
        sv.push(svd.singular_values[i]);
    }
    let br = ur.transpose() * b;
    let resid = (b - &ur * &br).norm();
    if resid > 1e-9 * (1.0 + b.norm()) {
        return None;
    }
    let mut ar = vr.clone();
    let mut pinv_t = vr.clone();
    for (k, s) in sv.iter().enumerate() {
        ar.row_mut(k).scale_mut(*s);
        pinv_t.row_mut(k).scale_mut(1.0 / s);
    }
    let pinv = pinv_t.transpose();
    // Householder QR of [V_r' | I] yields an orthonormal completion of V_r'.
    let mut stacked = DMatrix::zeros(n, rank + n);
    stacked.view_mut((0, 0), (n, rank)).copy_from(&vr.transpose());
    stacked.view_mut((0, rank), (n, n)).fill_with_identity();
    let q = stacked.qr().q();
    let null = q.columns(rank, n - rank).into_owned();
    Some(Equalities { a: ar, b: br, u: ur, pinv, pinv_t, null })
}

/// KKT solves in NT-scaled coordinates: with `G̃ = W^{-T}G` and the null
/// space `N` of `A`, the reduced system is a least-squares problem in
/// `G̃N`, solved through its QR factors rather than normal equations.
struct Kkt<'a> {
    g: &'a DMatrix<f64>,
    eq: &'a Equalities,
    cones: &'a Cones,
    sc: &'a [Scaling],
    g_scaled: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl<'a> Kkt<'a> {
    fn new(g: &'a DMatrix<f64>, eq: &'a Equalities, cones: &'a Cones, sc: &'a [Scaling]) -> Option<Self> {
        let (m, n) = g.shape();
        let mut g_scaled = DMatrix::zeros(m, n);
        for j in 0..n {
            let col = g.column(j).into_owned();
            g_scaled.set_column(j, &cones.map(&col, |k, mk| sc[k].winvt(&mk)));
        }
        let qr = (&g_scaled * &eq.null).qr();
        let r = qr.r();
        if (0..r.nrows()).any(|i| !(r[(i, i)].abs() > 0.0) || !r[(i, i)].is_finite()) {
            return None;
        }
        Some(Self { g, eq, cones, sc, g_scaled, q: qr.q(), r })
    }

    fn h(&self, v: &DVector<f64>) -> DVector<f64> {
        self.cones.map(v, |k, m| self.sc[k].h(&m))
    }

    fn solve_once(
        &self,
        r1: &DVector<f64>,
        r2: &DVector<f64>,
        r3: &DVector<f64>,
    ) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        let t = self.cones.map(r3, |k, m| self.sc[k].winvt(&m));
        let xp = -(&self.eq.pinv * r2);
        let w1 = self.r.tr_solve_upper_triangular(&(self.eq.null.transpose() * r1))?;
        let w2 = self.q.transpose() * (&self.g_scaled * &xp + &t);
        let v = self.r.solve_upper_triangular(&(w1 - w2))?;
        let dx = xp + &self.eq.null * v;
        let dz_scaled = &self.g_scaled * &dx + t;
        let dz = self.cones.map(&dz_scaled, |k, m| self.sc[k].winv(&m));
        let dy = &self.eq.pinv_t * (r1 - self.g.transpose() * &dz);
        Some((dx, dy, dz))
    }

    /// Solves `A'Δy + G'Δz = r1`, `−AΔx = r2`, `−GΔx + HΔz = r3` with
    /// iterative refinement.
    fn solve(
        &self,
        r1: &DVector<f64>,
        r2: &DVector<f64>,
        r3: &DVector<f64>,
    ) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        let (mut dx, mut dy, mut dz) = self.solve_once(r1, r2, r3)?;
        for _ in 0..2 {
            let e1 = r1 - (self.eq.a.transpose() * &dy + self.g.transpose() * &dz);
            let e2 = r2 + &self.eq.a * &dx;
            let e3 = r3 - (self.h(&dz) - self.g * &dx);
            let (cx, cy, cz) = self.solve_once(&e1, &e2, &e3)?;
            dx += cx;
            dy += cy;
            dz += cz;
        }
        Some((dx, dy, dz))
    }
}

struct Direction {
    dx: DVector<f64>,
    dy: DVector<f64>,
    dz: DVector<f64>,
    ds: DVector<f64>,
    dtau: f64,
    dkappa: f64,
    /// Scaled directions `W^{-T}Δs` and `WΔz` per cone.
    ds_scaled: Vec<CMat>,
    dz_scaled: Vec<CMat>,
}

pub(crate) fn solve_conic(form: &ConicForm, opts: &SolveOptions) -> RawResult {
    let n = form.c.len();
    let cones = &form.cones;
    let m = cones.len;
    let empty = |status| RawResult {
        status,
        x: DVector::zeros(n),
        y: DVector::zeros(form.b.len()),
        z: DVector::zeros(m),
        pres: f64::INFINITY,
        dres: f64::INFINITY,
        gap: f64::INFINITY,
        dcost: f64::NAN,
        iterations: 0,
        trace: Vec::new(),
    };
    let Some(eq) = reduce_equalities(&form.a, &form.b) else {
        return empty(SolveStatus::Infeasible);
    };
    let (a, b, g, h, cv) = (&eq.a, &eq.b, &form.g, &form.h, &form.c);
    let p = a.nrows();
    let resx0 = cv.norm().max(1.0);
    let resy0 = b.norm().max(1.0);
    let resz0 = h.norm().max(1.0);
    let degree = cones.degree() as f64;
    let e = cones.identity();

    // Starting point: least-squares primal and least-norm dual, shifted
    // into the cone interior.
    let mut k0 = DMatrix::zeros(n + p, n + p);
    k0.view_mut((0, 0), (n, n)).copy_from(&(g.transpose() * g));
    k0.view_mut((0, n), (n, p)).copy_from(&a.transpose());
    k0.view_mut((n, 0), (p, n)).copy_from(a);
    let lu0 = k0.lu();
    let mut rhs = DVector::zeros(n + p);
    rhs.rows_mut(0, n).copy_from(&(g.transpose() * h));
    rhs.rows_mut(n, p).copy_from(b);
    let Some(sol) = lu0.solve(&rhs) else {
        return empty(SolveStatus::SolverFailure);
    };
    let mut x = sol.rows(0, n).into_owned();
    let mut s = h - g * &x;
    rhs.rows_mut(0, n).copy_from(&(-cv));
    rhs.rows_mut(n, p).fill(0.0);
    let Some(sol) = lu0.solve(&rhs) else {
        return empty(SolveStatus::SolverFailure);
    };
    let mut y = sol.rows(n, p).into_owned();
    let mut z = g * sol.rows(0, n);
    for v in [&mut s, &mut z] {
        let t = -cones.min_eigenvalue(v);
        if t >= -1e-8 * v.norm().max(1.0) {
            *v += &e * (1.0 + t);
        }
    }
    let mut tau = 1.0;
    let mut kappa = 1.0;

    let mut trace = Vec::new();
    let mut status = None;
    let mut iterations = 0;
    let (mut pres, mut dres, mut gap, mut pcost, mut dcost);
    let (mut pinf, mut dinf);
    // Best iterate by max(pres, dres, relgap), used if progress breaks down.
    let mut best: Option<(f64, Snapshot)> = None;

    loop {
        let rx = a.transpose() * &y + g.transpose() * &z + cv * tau;
        let ry = b * tau - a * &x;
        let rz = h * tau - g * &x - &s;
        let cx = cv.dot(&x);
        let by = b.dot(&y);
        let hz = h.dot(&z);
        let rt = -cx - by - hz - kappa;
        let sz = s.dot(&z);
        let mu = (sz + tau * kappa) / (degree + 1.0);
        pcost = cx / tau;
        dcost = -(by + hz) / tau;
        pres = (ry.norm() / resy0).max(rz.norm() / resz0) / tau;
        dres = rx.norm() / resx0 / tau;
        gap = sz / (tau * tau);
        let relgap = gap / pcost.abs().min(dcost.abs()).max(1.0);
        pinf = if hz + by < 0.0 {
            (a.transpose() * &y + g.transpose() * &z).norm() / resx0 / -(hz + by)
        } else {
            f64::INFINITY
        };
        dinf = if cx < 0.0 {
            (a * &x).norm().max((g * &x + &s).norm()) / resy0.max(resz0) / -cx
        } else {
            f64::INFINITY
        };
        if opts.record_trace {
            trace.push(TraceRow { iteration: iterations, objective: pcost, primal_residual: pres, dual_residual: dres, mu });
        }
        if pres <= opts.eps && dres <= opts.eps && relgap <= opts.eps {
            status = Some(SolveStatus::Optimal);
            break;
        }
        let merit = pres.max(dres).max(relgap);
        match &best {
            Some((m, _)) if *m <= merit => {
                if *m <= opts.accept && merit > 1e3 * m {
                    break;
                }
            }
            _ => {
                let snap = Snapshot {
                    x: x.clone(),
                    y: y.clone(),
                    z: z.clone(),
                    tau,
                    pres,
                    dres,
                    gap,
                    dcost,
                };
                best = Some((merit, snap));
            }
        }
        if pinf <= opts.accept {
            status = Some(SolveStatus::Infeasible);
            break;
        }
        if dinf <= opts.accept {
            status = Some(SolveStatus::Unbounded);
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }

        let sc: Option<Vec<Scaling>> =
            (0..cones.count()).map(|k| Scaling::new(&cones.mat(&s, k), &cones.mat(&z, k))).collect();
        let Some(sc) = sc else { break };

        let Some(solver) = Kkt::new(g, &eq, cones, &sc) else { break };
        let Some((x1, y1, z1)) = solver.solve(cv, b, h) else { break };
        let denom_base = cv.dot(&x1) + b.dot(&y1) + h.dot(&z1);

        let newton = |eta: f64, dsm: &[CMat], dk: f64| -> Option<Direction> {
            let ldiv: Vec<CMat> = (0..cones.count()).map(|k| sc[k].lam_div(&dsm[k])).collect();
            let mut r3 = &rz * (-eta);
            let mut wt_ldiv = DVector::zeros(m);
            for k in 0..cones.count() {
                cones.put(&mut wt_ldiv, k, &sc[k].wt(&ldiv[k]));
            }
            r3 += wt_ldiv;
            let (x0, y0, z0) = solver.solve(&(&rx * (-eta)), &(&ry * (-eta)), &r3)?;
            let num = -eta * rt + dk / tau + cv.dot(&x0) + b.dot(&y0) + h.dot(&z0);
            let dtau = num / (kappa / tau + denom_base);
            let dx = x0 - &x1 * dtau;
            let dy = y0 - &y1 * dtau;
            let dz = z0 - &z1 * dtau;
            let dkappa = (dk - kappa * dtau) / tau;
            let mut ds = DVector::zeros(m);
            let mut ds_scaled = Vec::with_capacity(cones.count());
            let mut dz_scaled = Vec::with_capacity(cones.count());
            for k in 0..cones.count() {
                let dzt = sc[k].w(&cones.mat(&dz, k));
                let dst = &ldiv[k] - &dzt;
                cones.put(&mut ds, k, &sc[k].wt(&dst));
                ds_scaled.push(dst);
                dz_scaled.push(dzt);
            }
            Some(Direction { dx, dy, dz, ds, dtau, dkappa, ds_scaled, dz_scaled })
        };
        let max_step = |d: &Direction| -> f64 {
            let mut alpha = f64::INFINITY;
            for k in 0..cones.count() {
                alpha = alpha.min(sc[k].max_step(&d.ds_scaled[k])).min(sc[k].max_step(&d.dz_scaled[k]));
            }
            if d.dtau < 0.0 {
                alpha = alpha.min(-tau / d.dtau);
            }
            if d.dkappa < 0.0 {
                alpha = alpha.min(-kappa / d.dkappa);
            }
            alpha
        };

        let lam_sq: Vec<CMat> = sc.iter().map(|s| s.lam_sq()).collect();
        let ds_aff: Vec<CMat> = lam_sq.iter().map(|l| -l).collect();
        let Some(aff) = newton(1.0, &ds_aff, -tau * kappa) else { break };
        let alpha_aff = max_step(&aff).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3);
        let ds_cor: Vec<CMat> = (0..cones.count())
            .map(|k| {
                let d = cones.dims[k];
                -&lam_sq[k] + CMat::identity(d, d) * c(sigma * mu, 0.0)
                    - circ(&aff.ds_scaled[k], &aff.dz_scaled[k])
            })
            .collect();
        let dk_cor = -tau * kappa + sigma * mu - aff.dtau * aff.dkappa;
        let Some(dir) = newton(1.0 - sigma, &ds_cor, dk_cor) else { break };
        let alpha = (0.99 * max_step(&dir)).min(1.0);
        if !(alpha > 1e-12) {
            break;
        }
        x += &dir.dx * alpha;
        y += &dir.dy * alpha;
        z += &dir.dz * alpha;
        s += &dir.ds * alpha;
        tau += alpha * dir.dtau;
        kappa += alpha * dir.dkappa;
        iterations += 1;
    }

    if status.is_none() {
        if pinf <= 1e-6 {
            status = Some(SolveStatus::Infeasible);
        } else if dinf <= 1e-6 {
            status = Some(SolveStatus::Unbounded);
        } else if let Some((merit, snap)) = best {
            x = snap.x;
            y = snap.y;
            z = snap.z;
            tau = snap.tau;
            pres = snap.pres;
            dres = snap.dres;
            gap = snap.gap;
            dcost = snap.dcost;
            status = Some(if merit <= opts.accept { SolveStatus::Optimal } else { SolveStatus::SolverFailure });
        }
    }
    let y_full = if p > 0 { &eq.u * &y } else { DVector::zeros(form.b.len()) };
    RawResult {
        status: status.unwrap_or(SolveStatus::SolverFailure),
        x: x / tau,
        y: y_full / tau,
        z: z / tau,
        pres,
        dres,
        gap,
        dcost,
        iterations,
        trace,
    }
}

struct Snapshot {
    x: DVector<f64>,
    y: DVector<f64>,
    z: DVector<f64>,
    tau: f64,
    pres: f64,
    dres: f64,
    gap: f64,
    dcost: f64,
}
