//! Exact linear assignment (Hungarian method: shortest augmenting paths with
//! dual potentials).
//!
//! Dense O(n^3) solver over `f64` costs. Each Dijkstra step scans only the
//! columns not yet finalized, ties prefer free columns, and potentials are
//! updated once per augmentation. Used for exact Wasserstein-1 between
//! equal-size point clouds.
//!
//! Larger problems first run an auction with tolerance scaling and keep only
//! its prices as starting column duals. Those are close to optimal, so the
//! augmenting paths that follow are short. The result is still exact: the
//! auction only changes where the search starts.

const NONE: usize = usize::MAX;

/// Row-major square cost matrix.
#[derive(Clone, Debug)]
pub struct CostMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Total cost of `assignment` (row `i` goes to column `assignment[i]`),
    /// summed in row order.
    pub fn total(&self, assignment: &[usize]) -> f64 {
        assignment.iter().enumerate().map(|(i, &j)| self.get(i, j)).sum()
    }
}

/// Problems above this size start from auction prices.
const AUCTION_MIN_SIZE: usize = 64;
/// Final auction tolerance relative to the largest cost.
const AUCTION_FINAL_EPS: f64 = 1e-6;
/// Tolerance reduction between auction phases.
const AUCTION_EPS_FACTOR: f64 = 8.0;

/// `v_j = min_i (c_ij - min_k c_ik)`.
fn column_reduction(costs: &CostMatrix) -> Vec<f64> {
    let n = costs.size();
    let mut v = vec![f64::INFINITY; n];
    for i in 0..n {
        let row = costs.row(i);
        let ui = row.iter().copied().fold(f64::INFINITY, f64::min);
        for (vj, &c) in v.iter_mut().zip(row) {
            *vj = vj.min(c - ui);
        }
    }
    v
}

/// Forward auction with tolerance scaling (minimisation form). Returns
/// `v = -prices`: near-optimal column duals. Only the duals are kept; the
/// exact matching is built from them by the augmenting-path phase.
fn auction_column_duals(costs: &CostMatrix) -> Vec<f64> {
    let n = costs.size();
    let scale = costs.data.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let mut prices = vec![0.0f64; n];
    if scale == 0.0 {
        return prices;
    }
    let final_eps = scale * AUCTION_FINAL_EPS;
    let mut eps = scale / 4.0;
    let mut owner = vec![NONE; n];
    let mut queue = std::collections::VecDeque::with_capacity(n);
    loop {
        owner.fill(NONE);
        queue.clear();
        queue.extend(0..n);
        while let Some(i) = queue.pop_front() {
            let mut best = f64::INFINITY;
            let mut second = f64::INFINITY;
            let mut target = NONE;
            for (j, (&c, &p)) in costs.row(i).iter().zip(&prices).enumerate() {
                let value = c + p;
                if value < best {
                    second = best;
                    best = value;
                    target = j;
                } else if value < second {
                    second = value;
                }
            }
            let raise = if second.is_finite() { second - best } else { 0.0 };
            prices[target] += raise + eps;
            let previous = std::mem::replace(&mut owner[target], i);
            if previous != NONE {
                queue.push_back(previous);
            }
        }
        if eps <= final_eps {
            break;
        }
        eps = (eps / AUCTION_EPS_FACTOR).max(final_eps);
    }
    prices.iter().map(|p| -p).collect()
}

/// Returns the minimum-cost perfect matching as `assignment[row] = column`.
pub fn solve(costs: &CostMatrix) -> Vec<usize> {
    let v = if costs.size() > AUCTION_MIN_SIZE {
        auction_column_duals(costs)
    } else {
        column_reduction(costs)
    };
    solve_from(costs, v)
}

/// Augmenting-path phase from column duals `v`. Row duals are set to the
/// tightest feasible values, so every row has a zero reduced cost.
fn solve_from(costs: &CostMatrix, mut v: Vec<f64>) -> Vec<usize> {
    let n = costs.size();
    let mut col_of_row = vec![NONE; n];
    let mut row_of_col = vec![NONE; n];

    let mut u: Vec<f64> = (0..n)
        .map(|i| {
            costs
                .row(i)
                .iter()
                .zip(&v)
                .map(|(c, vj)| c - vj)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    // Greedy start on tight edges.
    for i in 0..n {
        let ui = u[i];
        if let Some(j) = (0..n).find(|&j| row_of_col[j] == NONE && costs.get(i, j) - ui - v[j] <= 0.0) {
            col_of_row[i] = j;
            row_of_col[j] = i;
        }
    }

    let mut shortest = vec![f64::INFINITY; n];
    let mut path = vec![NONE; n];
    let mut remaining: Vec<usize> = Vec::with_capacity(n);
    let mut scanned_rows: Vec<usize> = Vec::with_capacity(n);
    let mut scanned_cols: Vec<usize> = Vec::with_capacity(n);

    for start in 0..n {
        if col_of_row[start] != NONE {
            continue;
        }
        shortest.fill(f64::INFINITY);
        remaining.clear();
        remaining.extend((0..n).rev());
        scanned_rows.clear();
        scanned_cols.clear();

        let mut min_val = 0.0f64;
        let mut row = start;
        let sink = loop {
            if row != start {
                scanned_rows.push(row);
            }
            let row_costs = costs.row(row);
            let offset = min_val - u[row];
            let mut lowest = f64::INFINITY;
            let mut index = NONE;
            for (it, &j) in remaining.iter().enumerate() {
                let r = offset + row_costs[j] - v[j];
                if r < shortest[j] {
                    path[j] = row;
                    shortest[j] = r;
                }
                let s = shortest[j];
                if s < lowest || (s == lowest && row_of_col[j] == NONE) {
                    lowest = s;
                    index = it;
                }
            }
            // Every remaining column is reachable from a dense row.
            debug_assert!(index != NONE);
            min_val = lowest;
            let j = remaining.swap_remove(index);
            scanned_cols.push(j);
            if row_of_col[j] == NONE {
                break j;
            }
            row = row_of_col[j];
        };

        u[start] += min_val;
        for &i in &scanned_rows {
            u[i] += min_val - shortest[col_of_row[i]];
        }
        for &j in &scanned_cols {
            v[j] -= min_val - shortest[j];
        }

        let mut j = sink;
        loop {
            let i = path[j];
            row_of_col[j] = i;
            let next = col_of_row[i];
            col_of_row[i] = j;
            if i == start {
                break;
            }
            j = next;
        }
    }
    col_of_row
}
