//! Optimal assignment of predicted moments to ground-truth moments.

use vvids::model::{assignment_cost, hungarian_match, match_cost, LossWeights};

fn main() -> vvids::Result<()> {
    // three predicted (center, width) pairs with confidences, two targets
    let centers = [0.2, 0.55, 0.8];
    let widths = [0.1, 0.2, 0.15];
    let confidences = [0.3, 0.9, 0.6];
    let targets = [(0.78, 0.2), (0.5, 0.2)];
    let cost = match_cost(&centers, &widths, &confidences, &targets, &LossWeights::default())?;
    for q in 0..3 {
        println!("query {q}: {:?}", cost.row(q).iter().map(|c| format!("{c:.3}")).collect::<Vec<_>>());
    }
    let pairs = hungarian_match(&cost)?;
    for (q, t) in &pairs {
        println!("target {t} <- query {q}");
    }
    println!("total cost {:.4}", assignment_cost(&cost, &pairs));
    Ok(())
}
