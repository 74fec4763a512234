//! Annealed Green's function by singularity-subtracted quadrature.
use annealed_green::perturbation::{kdelta_kernel, MomentModel};
use annealed_green::quadrature::{free_green, AnnealedGreen, QuadratureConfig};
use annealed_green::{LatticePoint, MultiIndex};

fn main() -> annealed_green::Result<()> {
    let k = kdelta_kernel(&MomentModel::rademacher(), 3, 0.15, 3, 3, 32)?;
    let g = AnnealedGreen::new(&k, &QuadratureConfig::for_dim(3))?;
    println!("reference expansion order {}", g.reference().expansion_order());
    let xs = vec![vec![0, 0, 0], vec![1, 0, 0], vec![4, 0, 0], vec![3, 3, 3], vec![16, 0, 0]];
    let values = g.values(&xs)?;
    let grad = g.derivative_values(&xs, &MultiIndex::unit(3, 0))?;
    println!("x            G(x)            G_free(x)       grad_1 G(x)");
    for ((x, v), d) in xs.iter().zip(&values).zip(&grad) {
        let free = free_green(&LatticePoint::new(x.clone())?)?;
        println!("{:<12} {v:.12}  {free:.12}  {d:+.6e}", format!("{x:?}"));
    }
    Ok(())
}
