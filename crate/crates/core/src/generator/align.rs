//! Position pairing between the good and bad grammars. Paired positions
//! share their random draws so the two sentences agree wherever the
//! templates agree.

use crate::template::Rule;

/// Pairs `(good_position, bad_position)` sorted by good position.
///
/// Positions on a longest common subsequence of equal rules are paired
/// first. Leftover equal rules are then paired greedily in order, which
/// covers constituents that move between the two grammars.
pub fn align(good: &[Rule], bad: &[Rule]) -> Vec<(usize, usize)> {
    let (n, m) = (good.len(), bad.len());
    // lcs[i][j] = LCS length of good[i..] and bad[j..]
    let mut lcs = vec![vec![0usize; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i][j] = if good[i] == bad[j] {
                1 + lcs[i + 1][j + 1]
            } else {
                lcs[i + 1][j].max(lcs[i][j + 1])
            };
        }
    }
    let mut pairs = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        if good[i] == bad[j] && lcs[i][j] == 1 + lcs[i + 1][j + 1] {
            pairs.push((i, j));
            i += 1;
            j += 1;
        } else if lcs[i + 1][j] >= lcs[i][j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }

    let mut good_used = vec![false; n];
    let mut bad_used = vec![false; m];
    for &(g, b) in &pairs {
        good_used[g] = true;
        bad_used[b] = true;
    }
    for g in 0..n {
        if good_used[g] {
            continue;
        }
        if let Some(b) = (0..m).find(|&b| !bad_used[b] && bad[b] == good[g]) {
            bad_used[b] = true;
            good_used[g] = true;
            pairs.push((g, b));
        }
    }
    pairs.sort_unstable();
    pairs
}
