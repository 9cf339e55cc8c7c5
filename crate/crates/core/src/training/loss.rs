//! Loss heads, each returning (loss, cotangent on the full logit vector).
//!
//! Cotangents are exactly zero outside the declared block, which is what
//! guarantees a distillation stage can only see its own channel.

use std::ops::Range;

fn block_softmax(logits: &[f64], block: &Range<usize>) -> (Vec<f64>, f64) {
    let slice = &logits[block.clone()];
    let max = slice.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = slice.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let lse = max + sum.ln();
    (exps.iter().map(|e| e / sum).collect(), lse)
}

/// Cross-entropy restricted to a logit block; `label` indexes within the
/// block.
pub fn ce_loss_block(logits: &[f64], label: usize, block: &Range<usize>) -> (f64, Vec<f64>) {
    assert!(label < block.len(), "label {label} outside block of {}", block.len());
    let (softmax, lse) = block_softmax(logits, block);
    let loss = lse - logits[block.start + label];
    let mut cot = vec![0.0; logits.len()];
    for (i, s) in softmax.iter().enumerate() {
        cot[block.start + i] = s - if i == label { 1.0 } else { 0.0 };
    }
    (loss, cot)
}

/// KL(teacher ‖ student) between block-normalized softmax distributions at
/// temperature 1; cotangent on the student logits only.
pub fn kl_loss_aux(
    student_logits: &[f64],
    teacher_logits: &[f64],
    block: &Range<usize>,
) -> (f64, Vec<f64>) {
    let (q, _) = block_softmax(student_logits, block);
    let (p, _) = block_softmax(teacher_logits, block);
    let loss: f64 = p
        .iter()
        .zip(&q)
        .map(|(&pi, &qi)| if pi > 0.0 { pi * (pi / qi).ln() } else { 0.0 })
        .sum();
    let mut cot = vec![0.0; student_logits.len()];
    for (i, (qi, pi)) in q.iter().zip(&p).enumerate() {
        cot[block.start + i] = qi - pi;
    }
    (loss, cot)
}

/// Mean squared error over a logit block; cotangent zero outside it.
pub fn mse_loss_public(
    student_logits: &[f64],
    teacher_logits: &[f64],
    block: &Range<usize>,
) -> (f64, Vec<f64>) {
    let n = block.len() as f64;
    let mut loss = 0.0;
    let mut cot = vec![0.0; student_logits.len()];
    for i in block.clone() {
        let d = student_logits[i] - teacher_logits[i];
        loss += d * d / n;
        cot[i] = 2.0 * d / n;
    }
    (loss, cot)
}
