//! Cell-by-cell evaluation of the oil and water balances, written directly
//! from the governing formulas without touching the library's discretisation.

use porflow_core::{ReservoirCase, State, WellKind};

fn inv_b(c: f64, b_ref: f64, p_ref: f64, p: f64) -> f64 {
    (1.0 + c * (p - p_ref)) / b_ref
}

fn corey(case: &ReservoirCase, sw: f64) -> (f64, f64) {
    let r = &case.relperm;
    let s = ((sw - r.s_wc) / (1.0 - r.s_wc - r.s_or)).clamp(0.0, 1.0);
    (r.krw0 * s.powf(r.n_w), r.kro0 * (1.0 - s).powf(r.n_o))
}

/// `(r_o, r_w)` for every cell.
pub fn residual(case: &ReservoirCase, x: &State, prev: &State, controls: &[f64], dt: f64) -> (Vec<f64>, Vec<f64>) {
    let g = &case.grid;
    let (o, w) = (&case.fluid.oil, &case.fluid.water);
    let darcy = case.units.darcy_const;
    let c_r = case.rock.compressibility;
    let n = g.nx * g.ny;
    let mut r_o = vec![0.0; n];
    let mut r_w = vec![0.0; n];
    for j in 0..g.ny {
        for i in 0..g.nx {
            let c = j * g.nx + i;
            let p = x.pressure[c];
            let sw = x.sw[c];
            let bo_inv = inv_b(o.compressibility, o.fvf_ref, o.pressure_ref, p);
            let bw_inv = inv_b(w.compressibility, w.fvf_ref, w.pressure_ref, p);
            let pv = g.dx * g.dy * g.dz * case.rock.porosity[c] / 5.614_583;
            let dp = p - prev.pressure[c];
            let ds = sw - prev.sw[c];
            r_o[c] = pv / dt * bo_inv * ((1.0 - sw) * (o.compressibility + c_r) * dp - ds);
            r_w[c] = pv / dt * bw_inv * (sw * (w.compressibility + c_r) * dp + ds);

            let mut neighbours = Vec::new();
            if i > 0 {
                neighbours.push((c - 1, g.dy * g.dz / g.dx));
            }
            if i + 1 < g.nx {
                neighbours.push((c + 1, g.dy * g.dz / g.dx));
            }
            if j > 0 {
                neighbours.push((c - g.nx, g.dx * g.dz / g.dy));
            }
            if j + 1 < g.ny {
                neighbours.push((c + g.nx, g.dx * g.dz / g.dy));
            }
            for (nb, geom) in neighbours {
                let (ka, kb) = (case.rock.perm[c], case.rock.perm[nb]);
                let t = darcy * ka * kb / (ka + kb) * geom;
                let pn = x.pressure[nb];
                let up = if p > pn { c } else { nb };
                let (krw, kro) = corey(case, x.sw[up]);
                let bo_face = 0.5 * (1.0 / bo_inv + 1.0 / inv_b(o.compressibility, o.fvf_ref, o.pressure_ref, pn));
                let bw_face = 0.5 * (1.0 / bw_inv + 1.0 / inv_b(w.compressibility, w.fvf_ref, w.pressure_ref, pn));
                r_o[c] += t * kro / (o.viscosity * bo_face) * (p - pn);
                r_w[c] += t * krw / (w.viscosity * bw_face) * (p - pn);
            }
        }
    }
    for (well, &u) in case.wells.iter().zip(controls) {
        let c = well.j * g.nx + well.i;
        match well.kind {
            WellKind::RateControlledInjector => r_w[c] -= u,
            WellKind::BhpControlledProducer => {
                let p = x.pressure[c];
                let r_e = 0.14 * (g.dx * g.dx + g.dy * g.dy).sqrt();
                let wi = 2.0 * std::f64::consts::PI * darcy * case.rock.perm[c] * g.dz / ((r_e / well.r_w).ln() + well.skin);
                let (krw, kro) = corey(case, x.sw[c]);
                r_o[c] += kro / o.viscosity * inv_b(o.compressibility, o.fvf_ref, o.pressure_ref, p) * wi * (p - u);
                r_w[c] += krw / w.viscosity * inv_b(w.compressibility, w.fvf_ref, w.pressure_ref, p) * wi * (p - u);
            }
        }
    }
    (r_o, r_w)
}

/// Largest entrywise difference relative to the largest residual magnitude.
pub fn relative_gap(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}
