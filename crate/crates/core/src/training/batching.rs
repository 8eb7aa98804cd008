use std::ops::Range;

use crate::density::class_members;
use crate::numerics::Rng;

/// Consecutive batch ranges over `n` items. A trailing remainder shorter
/// than half a batch joins the previous batch.
pub fn batch_plan(n: usize, batch_size: usize) -> Vec<Range<usize>> {
    let mut out: Vec<Range<usize>> = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + batch_size).min(n);
        out.push(start..end);
        start = end;
    }
    if out.len() > 1 {
        let last = out.last().expect("nonempty").clone();
        if last.len() * 2 < batch_size {
            out.pop();
            out.last_mut().expect("nonempty").end = last.end;
        }
    }
    out
}

/// A shuffled order in which every window holds each class roughly in
/// proportion to its frequency: members are shuffled within their class and
/// placed at relative position `(rank + 0.5) / count`.
pub fn stratified_order(y: &[usize], rng: &mut Rng) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize, usize)> = Vec::with_capacity(y.len());
    for (class, mut members) in class_members(y) {
        rng.shuffle(&mut members);
        let n = members.len() as f64;
        for (rank, idx) in members.into_iter().enumerate() {
            keyed.push(((rank as f64 + 0.5) / n, class, idx));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, _, i)| i).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_covers_everything_once() {
        for (n, b) in [(10, 4), (9, 4), (8, 4), (3, 4), (130, 128), (200, 128)] {
            let plan = batch_plan(n, b);
            let covered: Vec<usize> = plan.iter().flat_map(|r| r.clone()).collect();
            assert_eq!(covered, (0..n).collect::<Vec<_>>(), "n={n} b={b}");
        }
        assert_eq!(batch_plan(130, 128).len(), 1);
        assert_eq!(batch_plan(200, 128).len(), 2);
    }

    #[test]
    fn stratified_batches_contain_every_class() {
        let y: Vec<usize> = (0..400).map(|i| if i % 10 < 6 { 0 } else { 1 + i % 3 }).collect();
        let order = stratified_order(&y, &mut Rng::new(3));
        let mut sorted = order.clone();
        sorted.sort();
        assert_eq!(sorted, (0..400).collect::<Vec<_>>());
        for r in batch_plan(400, 32) {
            let mut seen = [0usize; 4];
            for &i in &order[r] {
                seen[y[i]] += 1;
            }
            assert!(seen.iter().all(|&c| c >= 2), "{seen:?}");
        }
    }
}
