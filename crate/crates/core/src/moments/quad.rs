//! Moments by direct integration over SO(3); an oracle independent of the closed forms.

use num_complex::Complex64;

use super::empirical::Accumulator;
use super::{FirstMoment, SampleCount, SecondMoment};
use crate::harmonics::{wigner_table, Rotation};
use crate::model::{Distribution, Signal};
use crate::quadrature::QuadratureGrid;
use crate::reduce::tree_map_reduce;
use crate::simulate::{rotate_into, Layout};

/// Relative change between the grid and its refinement above which a warning is attached.
pub const REFINEMENT_THRESHOLD: f64 = 1e-6;

struct Pair {
    re: Accumulator,
    im: Option<Accumulator>,
}

fn integrate<F>(density: &F, x: &Signal, grid: &QuadratureGrid) -> (FirstMoment, SecondMoment)
where
    F: Fn(&Rotation) -> Complex64 + Sync,
{
    let layout = Layout::of(x);
    let w = layout.len();
    let nodes: Vec<(Rotation, f64)> = grid.nodes().collect();
    let table = wigner_table(x.l_max());
    let acc = tree_map_reduce(
        nodes.len(),
        256,
        |range| {
            let mut buf = vec![Complex64::new(0.0, 0.0); range.len() * w];
            let mut wre = Vec::with_capacity(range.len());
            let mut wim = Vec::with_capacity(range.len());
            for (k, (g, wt)) in nodes[range].iter().enumerate() {
                rotate_into(&table, x, g, &mut buf[k * w..(k + 1) * w]);
                let d = density(g) * wt;
                wre.push(d.re);
                wim.push(d.im);
            }
            Pair {
                re: Accumulator::from_block(&buf, w, Some(&wre)),
                im: wim.iter().any(|v| *v != 0.0).then(|| Accumulator::from_block(&buf, w, Some(&wim))),
            }
        },
        |a, b| Pair {
            re: a.re.merge(b.re),
            im: match (a.im, b.im) {
                (Some(p), Some(q)) => Some(p.merge(q)),
                (p, q) => p.or(q),
            },
        },
    )
    .expect("grid is nonempty");
    let (mut m1, mut m2) = acc.re.finish(layout, 1.0, SampleCount::Population);
    if let Some(im) = acc.im {
        let i = Complex64::new(0.0, 1.0);
        let (a1, a2) = im.finish(layout, 1.0, SampleCount::Population);
        let bands = m1.as_signal().bands().iter().zip(a1.as_signal().bands()).map(|(p, q)| p + q * i).collect();
        m1 = FirstMoment::new(Signal::new(bands).expect("same shapes"), SampleCount::Population);
        for (t, c) in a2.iter() {
            for (dst, v) in m2.component_mut(*t).iter_mut().zip(c) {
                *dst += v * i;
            }
        }
    }
    (m1, m2)
}

fn relative(a: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        a / scale
    } else {
        a
    }
}

/// Integrates E_rho[y] and E_rho[y (x) y] on `grid` against `density`, a function of band at most
/// `density_band`. The density may be complex, as the inversion formula gives for generic bands.
///
/// Warnings are attached when the grid is not exact for the integrand's band, and when doubling
/// every order moves the result by more than [`REFINEMENT_THRESHOLD`].
pub fn quadrature_moments<F>(
    density: F,
    density_band: usize,
    x: &Signal,
    grid: &QuadratureGrid,
) -> (FirstMoment, SecondMoment)
where
    F: Fn(&Rotation) -> Complex64 + Sync,
{
    let (mut m1, mut m2) = integrate(&density, x, grid);
    let exact = grid.exact_band();
    let l = x.l_max();
    if exact < density_band + l {
        m1.warnings
            .push(format!("grid is exact through band {exact}; first-moment integrand reaches {}", density_band + l));
    }
    if exact < density_band + 2 * l {
        m2.warnings.push(format!(
            "grid is exact through band {exact}; second-moment integrand reaches {}",
            density_band + 2 * l
        ));
    }
    let (r1, r2) = integrate(&density, x, &grid.refined());
    let diff1 = m1
        .as_signal()
        .bands()
        .iter()
        .zip(r1.as_signal().bands())
        .map(|(a, b)| (a - b).norm_squared())
        .sum::<f64>()
        .sqrt();
    let d1 = relative(diff1, r1.as_signal().norm());
    if d1 > REFINEMENT_THRESHOLD {
        m1.warnings.push(format!("first moment changed by {d1:.2e} (relative) on the refined grid"));
    }
    let d2 = relative(m2.max_abs_diff(&r2).expect("same shape"), r2.norm());
    if d2 > REFINEMENT_THRESHOLD {
        m2.warnings.push(format!("second moment changed by {d2:.2e} (relative) on the refined grid"));
    }
    (m1, m2)
}

/// Quadrature moments for the law represented by `rho`.
///
/// Moments see rho only through E[D^l(g)] = rho_hat_l^H, which for a complex weight is the
/// integral against the conjugated inversion formula. For a genuine density the two coincide.
pub fn quadrature_moments_for(rho: &Distribution, x: &Signal, grid: &QuadratureGrid) -> (FirstMoment, SecondMoment) {
    quadrature_moments(|g: &Rotation| rho.density_at(g).conj(), rho.l_max(), x, grid)
}

pub fn quadrature_first_moment<F>(density: F, density_band: usize, x: &Signal, grid: &QuadratureGrid) -> FirstMoment
where
    F: Fn(&Rotation) -> Complex64 + Sync,
{
    quadrature_moments(density, density_band, x, grid).0
}

pub fn quadrature_second_moment<F>(density: F, density_band: usize, x: &Signal, grid: &QuadratureGrid) -> SecondMoment
where
    F: Fn(&Rotation) -> Complex64 + Sync,
{
    quadrature_moments(density, density_band, x, grid).1
}
