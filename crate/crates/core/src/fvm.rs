//! Finite-volume discretisation of the two-phase mass balance.
//!
//! The per-step residual is
//!
//! ```text
//! r = A(x_k) (x_k - x_{k-1}) / dt + T(x_k) x_k - Q(x_k, u_k)
//! ```
//!
//! with every coefficient evaluated at `x_k`. [`Discretization::residual`] is
//! the single implementation used by the Newton solver, the physics loss and
//! the well diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jacobian::BlockJacobian;
use crate::model::{GridSpec, PermAveraging, ReservoirCase, RockModel, State, UnitConstants, WellKind, WellSpec};

/// `K_i K_j / (K_i + K_j)`.
#[inline]
pub fn harmonic_perm(k_i: f64, k_j: f64) -> f64 {
    k_i * k_j / (k_i + k_j)
}

/// Relative permeability of the upstream cell: `kr_i` if `p_i > p_j`, otherwise `kr_j`.
#[inline]
pub fn upstream_relperm(p_i: f64, p_j: f64, kr_i: f64, kr_j: f64) -> f64 {
    if p_i > p_j {
        kr_i
    } else {
        kr_j
    }
}

/// One interior face; `a < b` always.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Face {
    pub a: usize,
    pub b: usize,
    /// Geometric transmissibility `alpha K_ab A / d`.
    pub g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceTransmissibility {
    /// x-faces first (row by row), then y-faces.
    pub faces: Vec<Face>,
    pub n_x_faces: usize,
}

impl FaceTransmissibility {
    pub fn x_faces(&self) -> &[Face] {
        &self.faces[..self.n_x_faces]
    }

    pub fn y_faces(&self) -> &[Face] {
        &self.faces[self.n_x_faces..]
    }
}

pub fn geometric_transmissibility(
    grid: &GridSpec,
    rock: &RockModel,
    units: &UnitConstants,
    averaging: PermAveraging,
) -> FaceTransmissibility {
    let face_perm = |a: usize, b: usize| {
        let h = harmonic_perm(rock.perm[a], rock.perm[b]);
        match averaging {
            PermAveraging::Harmonic => h,
            PermAveraging::TwoPoint => 2.0 * h,
        }
    };
    let x_geom = grid.dy * grid.dz / grid.dx;
    let y_geom = grid.dx * grid.dz / grid.dy;
    let mut faces = Vec::with_capacity((grid.nx - 1) * grid.ny + grid.nx * (grid.ny - 1));
    for j in 0..grid.ny {
        for i in 0..grid.nx.saturating_sub(1) {
            let a = grid.index(i, j);
            faces.push(Face { a, b: a + 1, g: units.darcy_const * face_perm(a, a + 1) * x_geom });
        }
    }
    let n_x_faces = faces.len();
    for j in 0..grid.ny.saturating_sub(1) {
        for i in 0..grid.nx {
            let a = grid.index(i, j);
            let b = a + grid.nx;
            faces.push(Face { a, b, g: units.darcy_const * face_perm(a, b) * y_geom });
        }
    }
    FaceTransmissibility { faces, n_x_faces }
}

/// Peaceman equivalent radius `0.14 sqrt(dx² + dy²)`.
pub fn effective_radius(grid: &GridSpec) -> f64 {
    0.14 * (grid.dx * grid.dx + grid.dy * grid.dy).sqrt()
}

/// Peaceman well index `2π α K h / (ln(r_e / r_w) + s)`.
pub fn well_index(grid: &GridSpec, rock: &RockModel, well: &WellSpec, units: &UnitConstants) -> Result<f64> {
    if !grid.contains(well.i, well.j) {
        return Err(Error::InvalidWellGeometry {
            well: well.name.clone(),
            reason: format!("cell ({}, {}) outside grid", well.i, well.j),
        });
    }
    let r_e = effective_radius(grid);
    if r_e <= well.r_w {
        return Err(Error::InvalidWellGeometry {
            well: well.name.clone(),
            reason: format!("r_e = {r_e:.4} ft does not exceed r_w = {} ft", well.r_w),
        });
    }
    let denom = (r_e / well.r_w).ln() + well.skin;
    if denom <= 0.0 {
        return Err(Error::InvalidWellGeometry {
            well: well.name.clone(),
            reason: format!("ln(r_e/r_w) + s = {denom:.4} is not positive"),
        });
    }
    let k = rock.perm[grid.index(well.i, well.j)];
    Ok(2.0 * std::f64::consts::PI * units.darcy_const * k * grid.dz / denom)
}

/// Surface rates of one well, positive into the reservoir.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WellRate {
    pub cell: usize,
    pub q_o: f64,
    pub q_w: f64,
    /// Producer whose block pressure is below its BHP.
    pub crossflow: bool,
}

/// Per-cell source vectors plus the names of producers evaluated in crossflow.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SourceTerms {
    pub q_o: Vec<f64>,
    pub q_w: Vec<f64>,
    pub crossflow: Vec<String>,
}

/// Diagonal accumulation blocks multiplying `dP/dt` and `dSw/dt`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Accumulation {
    pub a_op: Vec<f64>,
    pub a_os: Vec<f64>,
    pub a_wp: Vec<f64>,
    pub a_ws: Vec<f64>,
}

/// Per-cell oil and water residuals, surface volume per day.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResidualBundle {
    pub r_o: Vec<f64>,
    pub r_w: Vec<f64>,
}

impl ResidualBundle {
    pub fn max_abs(&self) -> f64 {
        self.r_o.iter().chain(&self.r_w).fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Row-compressed flux operator over pressure, one per phase.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FluxOperator {
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl FluxOperator {
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        (0..self.row_ptr.len() - 1)
            .map(|r| {
                (self.row_ptr[r]..self.row_ptr[r + 1])
                    .map(|k| self.vals[k] * x[self.cols[k]])
                    .sum()
            })
            .collect()
    }

    pub fn row_sum(&self, row: usize) -> f64 {
        self.vals[self.row_ptr[row]..self.row_ptr[row + 1]].iter().sum()
    }
}

/// The assembled matrix form `A x' + T x = Q` at one state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SystemMatrices {
    pub acc: Accumulation,
    pub t_op: FluxOperator,
    pub t_wp: FluxOperator,
    pub q_o: Vec<f64>,
    pub q_w: Vec<f64>,
}

/// State-dependent properties of one cell.
#[derive(Debug, Clone, Copy, Default)]
struct CellProps {
    inv_bo: f64,
    d_inv_bo: f64,
    inv_bw: f64,
    d_inv_bw: f64,
    bo: f64,
    d_bo: f64,
    bw: f64,
    d_bw: f64,
    krw: f64,
    kro: f64,
    d_krw: f64,
    d_kro: f64,
}

/// Precomputed geometry (face transmissibilities, well indices) for one case.
#[derive(Debug, Clone)]
pub struct Discretization {
    case: ReservoirCase,
    trans: FaceTransmissibility,
    well_indices: Vec<f64>,
    pore_volumes: Vec<f64>,
}

impl Discretization {
    pub fn new(case: &ReservoirCase) -> Result<Self> {
        case.validate()?;
        let trans = geometric_transmissibility(&case.grid, &case.rock, &case.units, case.perm_averaging);
        let well_indices = case
            .wells
            .iter()
            .map(|w| match w.kind {
                WellKind::BhpControlledProducer => well_index(&case.grid, &case.rock, w, &case.units),
                WellKind::RateControlledInjector => Ok(0.0),
            })
            .collect::<Result<Vec<_>>>()?;
        let pore_volumes = (0..case.grid.n_cells()).map(|c| case.pore_volume(c)).collect();
        Ok(Discretization { case: case.clone(), trans, well_indices, pore_volumes })
    }

    pub fn case(&self) -> &ReservoirCase {
        &self.case
    }

    pub fn transmissibility(&self) -> &FaceTransmissibility {
        &self.trans
    }

    pub fn well_indices(&self) -> &[f64] {
        &self.well_indices
    }

    /// Pore volume per cell, reservoir barrels.
    pub fn pore_volumes(&self) -> &[f64] {
        &self.pore_volumes
    }

    pub fn n_cells(&self) -> usize {
        self.case.grid.n_cells()
    }

    fn check_controls(&self, controls: &[f64]) -> Result<()> {
        if controls.len() != self.case.wells.len() {
            return Err(Error::invalid(
                "controls",
                format!("{} values for {} wells", controls.len(), self.case.wells.len()),
            ));
        }
        Ok(())
    }

    #[inline]
    fn cell_props(&self, p: f64, sw: f64) -> Result<CellProps> {
        let fluid = &self.case.fluid;
        let (inv_bo, d_inv_bo) = fluid.oil.inv_fvf(p)?;
        let (inv_bw, d_inv_bw) = fluid.water.inv_fvf(p)?;
        let (bo, d_bo) = fluid.oil.fvf(p)?;
        let (bw, d_bw) = fluid.water.fvf(p)?;
        let (krw, kro) = self.case.relperm.eval(sw);
        let (d_krw, d_kro) = self.case.relperm.derivs(sw);
        Ok(CellProps { inv_bo, d_inv_bo, inv_bw, d_inv_bw, bo, d_bo, bw, d_bw, krw, kro, d_krw, d_kro })
    }

    fn all_props(&self, state: &State) -> Result<Vec<CellProps>> {
        state
            .pressure
            .iter()
            .zip(&state.sw)
            .map(|(&p, &s)| self.cell_props(p, s))
            .collect()
    }

    /// Rate of well `w` at `state` under control `control`.
    pub fn well_rate(&self, w: usize, state: &State, control: f64) -> Result<WellRate> {
        let well = &self.case.wells[w];
        let cell = self.case.well_cell(well);
        match well.kind {
            WellKind::RateControlledInjector => Ok(WellRate { cell, q_o: 0.0, q_w: control, crossflow: false }),
            WellKind::BhpControlledProducer => {
                let props = self.cell_props(state.pressure[cell], state.sw[cell])?;
                let drawdown = state.pressure[cell] - control;
                let wi = self.well_indices[w];
                let fluid = &self.case.fluid;
                Ok(WellRate {
                    cell,
                    q_o: -props.kro / fluid.oil.viscosity * props.inv_bo * wi * drawdown,
                    q_w: -props.krw / fluid.water.viscosity * props.inv_bw * wi * drawdown,
                    crossflow: drawdown < 0.0,
                })
            }
        }
    }

    pub fn source_terms(&self, state: &State, controls: &[f64]) -> Result<SourceTerms> {
        self.check_controls(controls)?;
        state.check_dims(self.n_cells())?;
        let n = self.n_cells();
        let mut out = SourceTerms { q_o: vec![0.0; n], q_w: vec![0.0; n], crossflow: Vec::new() };
        for (w, &u) in controls.iter().enumerate() {
            let rate = self.well_rate(w, state, u)?;
            out.q_o[rate.cell] += rate.q_o;
            out.q_w[rate.cell] += rate.q_w;
            if rate.crossflow {
                out.crossflow.push(self.case.wells[w].name.clone());
            }
        }
        Ok(out)
    }

    pub fn accumulation(&self, state: &State) -> Result<Accumulation> {
        state.check_dims(self.n_cells())?;
        let c_r = self.case.rock.compressibility;
        let c_o = self.case.fluid.oil.compressibility;
        let c_w = self.case.fluid.water.compressibility;
        let n = self.n_cells();
        let mut acc = Accumulation {
            a_op: Vec::with_capacity(n),
            a_os: Vec::with_capacity(n),
            a_wp: Vec::with_capacity(n),
            a_ws: Vec::with_capacity(n),
        };
        for c in 0..n {
            let props = self.cell_props(state.pressure[c], state.sw[c])?;
            let pv = self.pore_volumes[c];
            let sw = state.sw[c];
            acc.a_op.push(pv * props.inv_bo * (1.0 - sw) * (c_o + c_r));
            acc.a_os.push(-pv * props.inv_bo);
            acc.a_wp.push(pv * props.inv_bw * sw * (c_w + c_r));
            acc.a_ws.push(pv * props.inv_bw);
        }
        Ok(acc)
    }

    /// Phase mobilities `(oil, water)` of a face, upstream kr and averaged `B`.
    #[inline]
    fn face_mobility(&self, face: &Face, p: &[f64], props: &[CellProps]) -> (f64, f64) {
        let (pa, pb) = (&props[face.a], &props[face.b]);
        let fluid = &self.case.fluid;
        let kro = upstream_relperm(p[face.a], p[face.b], pa.kro, pb.kro);
        let krw = upstream_relperm(p[face.a], p[face.b], pa.krw, pb.krw);
        (
            kro / (fluid.oil.viscosity * 0.5 * (pa.bo + pb.bo)),
            krw / (fluid.water.viscosity * 0.5 * (pa.bw + pb.bw)),
        )
    }

    /// The matrix form of the balance at `state`.
    pub fn system_matrices(&self, state: &State, controls: &[f64]) -> Result<SystemMatrices> {
        let acc = self.accumulation(state)?;
        let src = self.source_terms(state, controls)?;
        let props = self.all_props(state)?;
        let grid = &self.case.grid;
        let n = grid.n_cells();
        let mut diag_o = vec![0.0; n];
        let mut diag_w = vec![0.0; n];
        let mut off: Vec<Vec<(usize, f64, f64)>> = vec![Vec::new(); n];
        for face in &self.trans.faces {
            let (lo, lw) = self.face_mobility(face, &state.pressure, &props);
            let (to, tw) = (face.g * lo, face.g * lw);
            diag_o[face.a] += to;
            diag_o[face.b] += to;
            diag_w[face.a] += tw;
            diag_w[face.b] += tw;
            off[face.a].push((face.b, -to, -tw));
            off[face.b].push((face.a, -to, -tw));
        }
        let mut t_op = FluxOperator { row_ptr: vec![0], ..Default::default() };
        let mut t_wp = FluxOperator { row_ptr: vec![0], ..Default::default() };
        for c in 0..n {
            let mut entries = off[c].clone();
            entries.push((c, diag_o[c], diag_w[c]));
            entries.sort_by_key(|e| e.0);
            for (col, vo, vw) in entries {
                t_op.cols.push(col);
                t_op.vals.push(vo);
                t_wp.cols.push(col);
                t_wp.vals.push(vw);
            }
            t_op.row_ptr.push(t_op.cols.len());
            t_wp.row_ptr.push(t_wp.cols.len());
        }
        Ok(SystemMatrices { acc, t_op, t_wp, q_o: src.q_o, q_w: src.q_w })
    }

    fn check_step(&self, state_k: &State, state_km1: &State, controls: &[f64], dt: f64) -> Result<()> {
        state_k.check_dims(self.n_cells())?;
        state_km1.check_dims(self.n_cells())?;
        self.check_controls(controls)?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt", format!("must be positive, got {dt}")));
        }
        Ok(())
    }

    /// Fully implicit residual of one backward-Euler step.
    pub fn residual(&self, state_k: &State, state_km1: &State, controls: &[f64], dt: f64) -> Result<ResidualBundle> {
        self.check_step(state_k, state_km1, controls, dt)?;
        let props = self.all_props(state_k)?;
        let n = self.n_cells();
        let c_r = self.case.rock.compressibility;
        let c_o = self.case.fluid.oil.compressibility;
        let c_w = self.case.fluid.water.compressibility;
        let mut r_o = vec![0.0; n];
        let mut r_w = vec![0.0; n];
        for c in 0..n {
            let pr = &props[c];
            let scale = self.pore_volumes[c] / dt;
            let dp = state_k.pressure[c] - state_km1.pressure[c];
            let ds = state_k.sw[c] - state_km1.sw[c];
            let sw = state_k.sw[c];
            r_o[c] = scale * pr.inv_bo * ((1.0 - sw) * (c_o + c_r) * dp - ds);
            r_w[c] = scale * pr.inv_bw * (sw * (c_w + c_r) * dp + ds);
        }
        let p = &state_k.pressure;
        for face in &self.trans.faces {
            let (lo, lw) = self.face_mobility(face, p, &props);
            let dp = p[face.a] - p[face.b];
            let fo = face.g * lo * dp;
            let fw = face.g * lw * dp;
            r_o[face.a] += fo;
            r_o[face.b] -= fo;
            r_w[face.a] += fw;
            r_w[face.b] -= fw;
        }
        for (w, &u) in controls.iter().enumerate() {
            let rate = self.well_rate(w, state_k, u)?;
            r_o[rate.cell] -= rate.q_o;
            r_w[rate.cell] -= rate.q_w;
        }
        Ok(ResidualBundle { r_o, r_w })
    }

    /// Residual together with its analytic Jacobian with respect to `state_k`.
    pub fn residual_and_jacobian(
        &self,
        state_k: &State,
        state_km1: &State,
        controls: &[f64],
        dt: f64,
    ) -> Result<(ResidualBundle, BlockJacobian)> {
        let res = self.residual(state_k, state_km1, controls, dt)?;
        let props = self.all_props(state_k)?;
        let grid = &self.case.grid;
        let fluid = &self.case.fluid;
        let c_r = self.case.rock.compressibility;
        let c_o = fluid.oil.compressibility;
        let c_w = fluid.water.compressibility;
        let mut jac = BlockJacobian::five_point(grid);
        for c in 0..grid.n_cells() {
            let pr = &props[c];
            let scale = self.pore_volumes[c] / dt;
            let dp = state_k.pressure[c] - state_km1.pressure[c];
            let ds = state_k.sw[c] - state_km1.sw[c];
            let sw = state_k.sw[c];
            let oil_bracket = (1.0 - sw) * (c_o + c_r) * dp - ds;
            let water_bracket = sw * (c_w + c_r) * dp + ds;
            jac.add(c, 0, c, 0, scale * (pr.d_inv_bo * oil_bracket + pr.inv_bo * (1.0 - sw) * (c_o + c_r)));
            jac.add(c, 0, c, 1, scale * pr.inv_bo * (-(c_o + c_r) * dp - 1.0));
            jac.add(c, 1, c, 0, scale * (pr.d_inv_bw * water_bracket + pr.inv_bw * sw * (c_w + c_r)));
            jac.add(c, 1, c, 1, scale * pr.inv_bw * ((c_w + c_r) * dp + 1.0));
        }
        let p = &state_k.pressure;
        for face in &self.trans.faces {
            let (a, b) = (face.a, face.b);
            let dp = p[a] - p[b];
            let up = if p[a] > p[b] { a } else { b };
            // (kr, dkr/dsw at upstream, mu, B_a, B_b, dB_a, dB_b, equation index)
            let phases = [
                (props[up].kro, props[up].d_kro, fluid.oil.viscosity, props[a].bo, props[b].bo, props[a].d_bo, props[b].d_bo, 0),
                (props[up].krw, props[up].d_krw, fluid.water.viscosity, props[a].bw, props[b].bw, props[a].d_bw, props[b].d_bw, 1),
            ];
            for (kr, dkr, mu, ba, bb, dba, dbb, eq) in phases {
                let b_avg = 0.5 * (ba + bb);
                let lam = kr / (mu * b_avg);
                let dlam_db = -kr / (mu * b_avg * b_avg);
                let d_pa = face.g * (lam + dp * dlam_db * 0.5 * dba);
                let d_pb = face.g * (-lam + dp * dlam_db * 0.5 * dbb);
                let d_sup = face.g * dp * dkr / (mu * b_avg);
                jac.add(a, eq, a, 0, d_pa);
                jac.add(a, eq, b, 0, d_pb);
                jac.add(a, eq, up, 1, d_sup);
                jac.add(b, eq, a, 0, -d_pa);
                jac.add(b, eq, b, 0, -d_pb);
                jac.add(b, eq, up, 1, -d_sup);
            }
        }
        for (w, &u) in controls.iter().enumerate() {
            let well = &self.case.wells[w];
            if !well.is_producer() {
                continue;
            }
            let c = self.case.well_cell(well);
            let pr = &props[c];
            let wi = self.well_indices[w];
            let drawdown = p[c] - u;
            jac.add(c, 0, c, 0, wi / fluid.oil.viscosity * pr.kro * (pr.d_inv_bo * drawdown + pr.inv_bo));
            jac.add(c, 0, c, 1, wi / fluid.oil.viscosity * pr.d_kro * pr.inv_bo * drawdown);
            jac.add(c, 1, c, 0, wi / fluid.water.viscosity * pr.krw * (pr.d_inv_bw * drawdown + pr.inv_bw));
            jac.add(c, 1, c, 1, wi / fluid.water.viscosity * pr.d_krw * pr.inv_bw * drawdown);
        }
        Ok((res, jac))
    }

    /// Jacobian by central differences over a distance-2 colouring of the
    /// 5-point stencil: 5 colours, 2 unknowns per cell, 20 extra residuals.
    pub fn fd_jacobian(
        &self,
        state_k: &State,
        state_km1: &State,
        controls: &[f64],
        dt: f64,
    ) -> Result<(ResidualBundle, BlockJacobian)> {
        let base = self.residual(state_k, state_km1, controls, dt)?;
        let grid = &self.case.grid;
        let n = grid.n_cells();
        let color = |c: usize| {
            let (i, j) = grid.coords(c);
            (i + 2 * j) % 5
        };
        let step = |x: f64| (1e-6 * x.abs()).max(1e-8);
        let mut jac = BlockJacobian::five_point(grid);
        for col in 0..5 {
            for var in 0..2 {
                let mut plus = state_k.clone();
                let mut minus = state_k.clone();
                let mut width = vec![0.0; n];
                for c in (0..n).filter(|&c| color(c) == col) {
                    let (fp, fm) = if var == 0 {
                        (&mut plus.pressure, &mut minus.pressure)
                    } else {
                        (&mut plus.sw, &mut minus.sw)
                    };
                    let h = step(fp[c]);
                    fp[c] += h;
                    fm[c] -= h;
                    width[c] = fp[c] - fm[c];
                }
                let rp = self.residual(&plus, state_km1, controls, dt)?;
                let rm = self.residual(&minus, state_km1, controls, dt)?;
                for m in 0..n {
                    let src = std::iter::once(m).chain(grid.neighbors(m)).find(|&c| color(c) == col);
                    if let Some(c) = src {
                        jac.add(m, 0, c, var, (rp.r_o[m] - rm.r_o[m]) / width[c]);
                        jac.add(m, 1, c, var, (rp.r_w[m] - rm.r_w[m]) / width[c]);
                    }
                }
            }
        }
        Ok((base, jac))
    }

    /// `max |r| dt / (V φ)`: residual as a saturation-change-like quantity.
    pub fn scaled_residual_norm(&self, res: &ResidualBundle, dt: f64) -> f64 {
        let mut m: f64 = 0.0;
        for c in 0..self.n_cells() {
            let s = dt / self.pore_volumes[c];
            m = m.max(res.r_o[c].abs() * s).max(res.r_w[c].abs() * s);
        }
        m
    }
}

/// Geometric part plus per-case wells; see [`Discretization::source_terms`].
pub fn well_source_terms(state: &State, controls: &[f64], case: &ReservoirCase) -> Result<SourceTerms> {
    Discretization::new(case)?.source_terms(state, controls)
}

pub fn accumulation_coeffs(state: &State, case: &ReservoirCase) -> Result<Accumulation> {
    Discretization::new(case)?.accumulation(state)
}

pub fn assemble_residual(
    state_k: &State,
    state_km1: &State,
    controls: &[f64],
    dt: f64,
    case: &ReservoirCase,
) -> Result<ResidualBundle> {
    Discretization::new(case)?.residual(state_k, state_km1, controls, dt)
}
