//! Linear sum assignment over masked score matrices.

use serde::Serialize;
use thiserror::Error;

/// Scores of program arguments (rows) against tagged spans (columns).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreMatrix {
    pub scores: Vec<Vec<f64>>,
    /// `mask[r][c]` is true when column `c` may fill row `r`.
    pub mask: Vec<Vec<bool>>,
}

impl ScoreMatrix {
    pub fn new(scores: Vec<Vec<f64>>, mask: Vec<Vec<bool>>) -> Self {
        assert_eq!(scores.len(), mask.len(), "score and mask row counts differ");
        let cols = scores.first().map_or(0, Vec::len);
        assert!(
            scores.iter().all(|r| r.len() == cols) && mask.iter().all(|r| r.len() == cols),
            "ragged score matrix"
        );
        ScoreMatrix { scores, mask }
    }

    /// Every entry admissible.
    pub fn dense(scores: Vec<Vec<f64>>) -> Self {
        let mask = scores.iter().map(|r| vec![true; r.len()]).collect();
        ScoreMatrix::new(scores, mask)
    }

    pub fn rows(&self) -> usize {
        self.scores.len()
    }

    pub fn cols(&self) -> usize {
        self.scores.first().map_or(0, Vec::len)
    }
}

/// Injective row to column map.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assignment {
    pub cols: Vec<usize>,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LsaError {
    #[error("no admissible assignment; starved rows {rows:?}")]
    Infeasible { rows: Vec<usize> },
}

const TIE: f64 = 1e-9;

/// Maximum-score admissible assignment. Among optimal assignments the one
/// whose column vector is lexicographically smallest is returned.
pub fn hungarian(m: &ScoreMatrix) -> Result<Assignment, LsaError> {
    let n = m.rows();
    if n == 0 {
        return Ok(Assignment { cols: vec![], total: 0.0 });
    }
    let starved = starved_rows(m);
    if !starved.is_empty() {
        return Err(LsaError::Infeasible { rows: starved });
    }
    let all_rows: Vec<usize> = (0..n).collect();
    let all_cols: Vec<usize> = (0..m.cols()).collect();
    let (best, _) = solve(m, &all_rows, &all_cols).expect("feasible after the matching check");

    // Fix rows one at a time to the smallest column that keeps the optimum.
    let mut cols = Vec::with_capacity(n);
    let mut used = vec![false; m.cols()];
    let mut fixed = 0.0;
    for r in 0..n {
        let rest_rows = &all_rows[r + 1..];
        let mut chosen = None;
        for c in 0..m.cols() {
            if used[c] || !m.mask[r][c] {
                continue;
            }
            used[c] = true;
            let free: Vec<usize> = (0..m.cols()).filter(|&k| !used[k]).collect();
            let rest = if rest_rows.is_empty() { Some((0.0, vec![])) } else { solve(m, rest_rows, &free) };
            used[c] = false;
            if let Some((v, _)) = rest {
                if fixed + m.scores[r][c] + v >= best - TIE * (1.0 + best.abs()) {
                    chosen = Some(c);
                    break;
                }
            }
        }
        let c = chosen.expect("an optimal completion exists");
        used[c] = true;
        fixed += m.scores[r][c];
        cols.push(c);
    }
    let total = cols.iter().enumerate().map(|(r, &c)| m.scores[r][c]).sum();
    Ok(Assignment { cols, total })
}

/// Rows left unmatched by a maximum bipartite matching over the mask.
fn starved_rows(m: &ScoreMatrix) -> Vec<usize> {
    let mut owner: Vec<Option<usize>> = vec![None; m.cols()];
    fn augment(m: &ScoreMatrix, r: usize, seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for c in 0..m.cols() {
            if m.mask[r][c] && !seen[c] {
                seen[c] = true;
                if owner[c].is_none_or(|o| augment(m, o, seen, owner)) {
                    owner[c] = Some(r);
                    return true;
                }
            }
        }
        false
    }
    (0..m.rows()).filter(|&r| !augment(m, r, &mut vec![false; m.cols()], &mut owner)).collect()
}

/// Optimal assignment of `rows` into `cols` (maximising), or `None` when no
/// admissible perfect row matching exists. Shortest augmenting path with
/// potentials, on costs negated from the scores.
fn solve(m: &ScoreMatrix, rows: &[usize], cols: &[usize]) -> Option<(f64, Vec<usize>)> {
    let n = rows.len();
    let k = cols.len();
    if n > k {
        return None;
    }
    let max_abs = rows.iter().flat_map(|&r| cols.iter().map(move |&c| m.scores[r][c].abs())).fold(0.0, f64::max);
    let forbidden = 1.0 + 4.0 * (n as f64 + 1.0) * (max_abs + 1.0);
    let cost = |i: usize, j: usize| {
        let (r, c) = (rows[i - 1], cols[j - 1]);
        if m.mask[r][c] {
            -m.scores[r][c]
        } else {
            forbidden
        }
    };
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; k + 1];
    let mut p = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=k {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=k {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=k {
        if p[j] != 0 {
            assign[p[j] - 1] = cols[j - 1];
        }
    }
    if assign.iter().enumerate().any(|(i, &c)| !m.mask[rows[i]][c]) {
        return None;
    }
    let total = assign.iter().enumerate().map(|(i, &c)| m.scores[rows[i]][c]).sum();
    Some((total, assign))
}
