//! The modified Hungarian procedure and its exhaustive reference.

use super::{standard_hungarian, AssociationMatrix, Matrix};
use crate::error::{Error, Result};

/// Result of [`modified_hungarian`], with a trace of which steps fired.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Association {
    /// Zero-based column per region: `< N2` is a listed cell, `N2` is
    /// "new", `N2 + 1` is "occlusion".
    pub zeta: Vec<usize>,
    /// Rows whose row-wise maximum was already a sink column.
    pub pre_assigned: Vec<usize>,
    /// Rows moved to a sink column by the improvement loop, in order.
    pub defections: Vec<usize>,
    /// Rows left without a list column by a non-square solve.
    pub leftovers: Vec<usize>,
    /// Number of assignment solves performed.
    pub solves: usize,
}

impl Association {
    /// True when neither the pre-assignment nor the defection step changed
    /// anything.
    pub fn plain(&self) -> bool {
        self.pre_assigned.is_empty() && self.defections.is_empty()
    }
}

/// Sum of solver-view entries along `zeta`.
pub fn objective(a: &AssociationMatrix, zeta: &[usize]) -> f64 {
    zeta.iter().enumerate().map(|(i, &j)| a.working(i, j)).sum()
}

fn better_sink(a: &AssociationMatrix, i: usize) -> usize {
    if a.working(i, a.new_col()) > a.working(i, a.occlusion_col()) {
        a.new_col()
    } else {
        a.occlusion_col()
    }
}

fn sink_value(a: &AssociationMatrix, i: usize) -> f64 {
    a.working(i, a.new_col()).max(a.working(i, a.occlusion_col()))
}

pub fn modified_hungarian(a: &AssociationMatrix) -> Association {
    let n1 = a.regions();
    let n2 = a.list_cols();
    let mut out = Association {
        zeta: vec![usize::MAX; n1],
        ..Association::default()
    };

    // Step 1: rows that prefer a sink outright.
    let mut remaining = Vec::with_capacity(n1);
    for i in 0..n1 {
        let mut best = 0;
        for j in 1..n2 + 2 {
            if a.working(i, j) > a.working(i, best) {
                best = j;
            }
        }
        if best >= n2 {
            out.zeta[i] = best;
            out.pre_assigned.push(i);
        } else {
            remaining.push(i);
        }
    }

    loop {
        if remaining.is_empty() {
            break;
        }
        // Step 2: assignment on the list columns of the remaining rows.
        let mut sub = Matrix::zeros(remaining.len(), n2);
        for (r, &i) in remaining.iter().enumerate() {
            for j in 0..n2 {
                sub.set(r, j, a.working(i, j));
            }
        }
        let matched = standard_hungarian(&sub);
        out.solves += 1;

        // Step 3: the single row gaining most by moving to a sink.
        let mut defector: Option<(usize, f64)> = None;
        for (r, &i) in remaining.iter().enumerate() {
            let Some(j) = matched[r] else { continue };
            let omega = sink_value(a, i) - a.working(i, j);
            if omega > 0.0 && defector.is_none_or(|(_, best)| omega > best) {
                defector = Some((r, omega));
            }
        }

        match defector {
            Some((r, _)) => {
                let i = remaining.remove(r);
                out.zeta[i] = better_sink(a, i);
                out.defections.push(i);
            }
            None => {
                // Step 4: accept the current solution.
                for (r, &i) in remaining.iter().enumerate() {
                    match matched[r] {
                        Some(j) => out.zeta[i] = j,
                        None => {
                            out.zeta[i] = better_sink(a, i);
                            out.leftovers.push(i);
                        }
                    }
                }
                break;
            }
        }
    }
    out
}

/// Largest `N1` and `N2` accepted by [`brute_force_assignment`].
pub const ORACLE_LIMIT: usize = 8;

/// Exhaustive maximizer of the association objective: every row picks any
/// column, list columns at most once. Ties keep the lexicographically
/// first list of columns.
pub fn brute_force_assignment(a: &AssociationMatrix) -> Result<(Vec<usize>, f64)> {
    let n1 = a.regions();
    let n2 = a.list_cols();
    if n1 > ORACLE_LIMIT || n2 > ORACLE_LIMIT {
        return Err(Error::OracleLimit { rows: n1, cols: n2 + 2 });
    }

    struct Search<'a> {
        a: &'a AssociationMatrix,
        used: Vec<bool>,
        current: Vec<usize>,
        best: Option<(Vec<usize>, f64)>,
    }

    impl Search<'_> {
        fn run(&mut self, i: usize) {
            if i == self.a.regions() {
                let value = objective(self.a, &self.current);
                if self.best.as_ref().is_none_or(|(_, b)| value > *b) {
                    self.best = Some((self.current.clone(), value));
                }
                return;
            }
            for j in 0..self.a.list_cols() + 2 {
                let list = j < self.a.list_cols();
                if list && self.used[j] {
                    continue;
                }
                if list {
                    self.used[j] = true;
                }
                self.current.push(j);
                self.run(i + 1);
                self.current.pop();
                if list {
                    self.used[j] = false;
                }
            }
        }
    }

    let mut search = Search {
        a,
        used: vec![false; n2],
        current: Vec::with_capacity(n1),
        best: None,
    };
    search.run(0);
    Ok(search.best.unwrap_or((Vec::new(), 0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::{FORBIDDEN, FORBIDDEN_COST};

    fn feasible(a: &AssociationMatrix, zeta: &[usize]) -> bool {
        let mut used = vec![false; a.list_cols()];
        zeta.iter().all(|&j| {
            if j < a.list_cols() {
                !std::mem::replace(&mut used[j], true)
            } else {
                j < a.list_cols() + 2
            }
        })
    }

    #[test]
    fn sink_argmax_is_pre_assigned() {
        let a = AssociationMatrix::from_rows(2, &[vec![0.1, 0.2, 0.9, 0.0]]);
        let r = modified_hungarian(&a);
        assert_eq!(r.zeta, vec![2]);
        assert_eq!(r.pre_assigned, vec![0]);
        assert_eq!(r.solves, 0);
    }

    #[test]
    fn clean_assignment_exits_immediately() {
        let a = AssociationMatrix::from_rows(
            2,
            &[vec![0.9, 0.1, 0.0, 0.0], vec![0.2, 0.8, 0.0, 0.0]],
        );
        let r = modified_hungarian(&a);
        assert_eq!(r.zeta, vec![0, 1]);
        assert!(r.plain());
        assert_eq!(r.solves, 1);
    }

    #[test]
    fn forbidden_list_columns_drain_to_sinks() {
        let rows = vec![vec![FORBIDDEN, FORBIDDEN, 0.05, 0.05]; 3];
        let a = AssociationMatrix::from_rows(2, &rows);
        let r = modified_hungarian(&a);
        assert!(r.zeta.iter().all(|&j| j >= 2));
        assert!(feasible(&a, &r.zeta));
        assert_eq!(a.working(0, 0), FORBIDDEN_COST);
        // Equal sinks: the tie goes to the lower (new-cell) column.
        assert_eq!(r.pre_assigned, vec![0, 1, 2]);
        assert_eq!(r.zeta, vec![2, 2, 2]);
    }

    #[test]
    fn defection_then_resolve() {
        // Row 0 would rather be new than take its match; after it leaves,
        // row 1 gets column 0.
        let a = AssociationMatrix::from_rows(
            2,
            &[vec![0.5, 0.45, 0.6, 0.0], vec![0.4, 0.3, 0.0, 0.0]],
        );
        let r = modified_hungarian(&a);
        assert_eq!(r.pre_assigned, vec![0]);
        assert_eq!(r.zeta, vec![2, 0]);
        let b = AssociationMatrix::from_rows(
            2,
            &[vec![0.5, 0.45, 0.0, 0.48], vec![0.6, 0.0, 0.0, 0.0]],
        );
        let r = modified_hungarian(&b);
        // Hungarian gives row 0 -> col 1 (0.45) and row 1 -> col 0; row 0
        // then defects to occlusion (0.48 > 0.45).
        assert_eq!(r.defections, vec![0]);
        assert_eq!(r.zeta, vec![3, 0]);
        assert_eq!(r.solves, 2);
    }

    #[test]
    fn leftover_rows_take_better_sink() {
        let a = AssociationMatrix::from_rows(
            1,
            &[vec![0.9, 0.1, 0.2], vec![0.8, 0.3, 0.1]],
        );
        let r = modified_hungarian(&a);
        assert_eq!(r.zeta, vec![0, 1]);
        assert_eq!(r.leftovers, vec![1]);
    }

    #[test]
    fn no_list_columns() {
        let a = AssociationMatrix::from_rows(0, &[vec![0.1, 0.3], vec![0.4, 0.2]]);
        let r = modified_hungarian(&a);
        assert_eq!(r.zeta, vec![1, 0]);
    }

    #[test]
    fn brute_force_examples() {
        let a = AssociationMatrix::from_rows(1, &[vec![0.3, 0.5, 0.2]]);
        let (z, v) = brute_force_assignment(&a).unwrap();
        assert_eq!((z, v), (vec![1], 0.5));

        let a = AssociationMatrix::from_rows(1, &[vec![0.9, 0.1, 0.1], vec![0.8, 0.1, 0.1]]);
        let (z, v) = brute_force_assignment(&a).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        assert_eq!(z[0], 0);
        assert!(z[1] == 1 || z[1] == 2);

        let big = AssociationMatrix::new(9, 1);
        assert!(matches!(brute_force_assignment(&big), Err(Error::OracleLimit { .. })));
    }

    #[test]
    fn greedy_defection_can_miss_the_optimum() {
        // Sending row 1 to a sink frees column 0 for row 0; neither row
        // prefers a sink on its own, so the procedure keeps the plain
        // assignment while the exhaustive search finds the better one.
        let a = AssociationMatrix::from_rows(
            2,
            &[vec![1.0, 0.9, 0.0, 0.0], vec![0.95, 0.0, 0.9, 0.0]],
        );
        let r = modified_hungarian(&a);
        assert!(r.plain());
        assert_eq!(r.zeta, vec![1, 0]);
        let (z, best) = brute_force_assignment(&a).unwrap();
        assert_eq!(z, vec![0, 2]);
        assert!(best > objective(&a, &r.zeta));
    }
}
