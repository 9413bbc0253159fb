//! Threshold calibration at 95% TPR, FPR95, AUROC and the decision rule on
//! hand-made score lists.

use gradood::detectors::classify;
use gradood::evalharness::{auroc, calibrate_lambda, fpr95, histogram};

fn main() -> gradood::Result<()> {
    let id: Vec<f64> = (1..=100).map(f64::from).collect();
    let ood: Vec<f64> = (1..=10).map(f64::from).collect();
    let lambda = calibrate_lambda(&id, 0.95)?;
    println!("λ at 95% TPR = {lambda}");
    println!("FPR95 = {}", fpr95(&id, &ood)?);
    println!("AUROC = {}", auroc(&id, &ood)?);
    println!("score 5 → {:?}, score 6 → {:?}", classify(5.0, lambda), classify(6.0, lambda));
    print!("{}", histogram(&ood, 5)?.to_csv());
    Ok(())
}
