//! Leading-order asymptotics: calibration, residual exponents along rays, and U_1.
use annealed_green::asymptotics::{calibrate_leading, residual_fit, u1_eval, ExpansionTerm, RayProbe, DEFAULT_EPSILONS};
use annealed_green::perturbation::{kdelta_kernel, t_kernel, HomogenizedData, MomentModel};
use annealed_green::quadrature::{AnnealedGreen, QuadratureConfig};
use annealed_green::MatrixKernel;

fn main() -> annealed_green::Result<()> {
    let cal = calibrate_leading(3)?;
    println!("lim |x| G_free = {:.8}, kappa_3 = {:.8}, factor {}", cal.raw, cal.kappa, cal.factor);

    let k = kdelta_kernel(&MomentModel::rademacher(), 3, 0.15, 3, 3, 32)?;
    let g = AnnealedGreen::new(&k, &QuadratureConfig::for_dim(3))?;
    let h = g.homogenized().clone();
    let terms = vec![ExpansionTerm::leading(&h, cal.factor)];
    for u in RayProbe::default_directions(3) {
        let probe = RayProbe::near_radii(u, &[8.0, 12.0, 16.0, 24.0, 32.0])?;
        let values = g.values(&probe.points())?;
        let probe = probe.with_values(values)?;
        let fit = residual_fit(&probe, &terms, &h)?;
        println!("ray {:?}: residual exponent {:.3}", probe.direction, fit.exponent);
    }

    // U_1 needs an odd walk kernel; the lattice walk itself is even.
    let t = t_kernel(&MatrixKernel::new(3, 0, 0.0)?);
    let u1 = u1_eval(&[1.0, 0.0, 0.0], &t, &HomogenizedData::identity(3), &DEFAULT_EPSILONS)?;
    println!("U_1(e_1) at delta = 0: {}", u1.value);
    Ok(())
}
