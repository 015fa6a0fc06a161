/// Kendall-tau similarity between two orderings, mapped from [-1, 1] to
/// [0, 1]. Only items present in both orderings are compared; with fewer than
/// two shared items there is nothing to disagree about and the result is 1.
pub fn order_similarity<T: PartialEq>(reference: &[T], candidate: &[T]) -> f64 {
    let positions: Vec<usize> = reference
        .iter()
        .filter_map(|r| candidate.iter().position(|c| c == r))
        .collect();
    let n = positions.len();
    if n < 2 {
        return 1.0;
    }
    let (concordant, discordant) = count_pairs(&positions);
    let total = (n * (n - 1) / 2) as f64;
    let tau = (concordant as f64 - discordant as f64) / total;
    (tau + 1.0) / 2.0
}

/// Pairs of shared items (in reference order) that the candidate inverts.
pub fn inversions<'a, T: PartialEq>(reference: &'a [T], candidate: &[T]) -> Vec<(&'a T, &'a T)> {
    let shared: Vec<(&T, usize)> = reference
        .iter()
        .filter_map(|r| candidate.iter().position(|c| c == r).map(|p| (r, p)))
        .collect();
    let mut out = Vec::new();
    for i in 0..shared.len() {
        for j in i + 1..shared.len() {
            if shared[i].1 > shared[j].1 {
                out.push((shared[i].0, shared[j].0));
            }
        }
    }
    out
}

fn count_pairs(positions: &[usize]) -> (usize, usize) {
    let mut concordant = 0;
    let mut discordant = 0;
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            if positions[i] < positions[j] {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    (concordant, discordant)
}
