//! Evaluate the regression and center losses on a few hand-picked points.

use painreg::losses::{
    center_loss, center_loss_grads, joint_loss, mse_loss, smooth_l1_grad, smooth_l1_loss, CenterNorm, Centers,
    LossConfig,
};

fn main() -> painreg::Result<()> {
    println!("{:>6} {:>8} {:>10} {:>10} {:>10}", "e", "mse", "sl1 t=1", "sl1 grad", "sl1 t=0");
    for e in [0.0, 0.5, 1.0, 2.0, 3.0] {
        println!(
            "{e:>6} {:>8} {:>10} {:>10} {:>10}",
            mse_loss(e, 0.0)?,
            smooth_l1_loss(e, 0.0, 1.0)?,
            smooth_l1_grad(e, 0.0, 1.0)?,
            smooth_l1_loss(e, 0.0, 0.0)?,
        );
    }

    let mut centers = Centers::zeros(6, 2);
    centers.row_mut(2).copy_from_slice(&[1.0, 1.0]);
    let x = [4.0, 5.0];
    for norm in [CenterNorm::L1, CenterNorm::L2] {
        let (gx, gc) = center_loss_grads(&x, 2, &centers, norm)?;
        println!(
            "{norm:?}: loss {} grad_x {gx:?} grad_c {gc:?}",
            center_loss(&x, 2, &centers, norm)?
        );
    }

    let config = LossConfig {
        norm: CenterNorm::L2,
        ..Default::default()
    };
    let j = joint_loss(3.0, &x, 2, &centers, &config)?;
    println!(
        "joint: regression {} + {} x center {} = {}",
        j.regression, config.lambda, j.center, j.total
    );
    Ok(())
}
