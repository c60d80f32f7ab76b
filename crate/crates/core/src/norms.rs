//! Error norms against reference solutions and convergence-order tables.
//!
//! Norms are taken with the solver's own quadrature: L1 integrates
//! |numerical - reference| cell by cell, L-infinity takes the maximum over
//! all volume quadrature points.

#[derive(Debug, Clone)]
pub struct VarError {
    pub name: String,
    pub l1: f64,
    pub linf: f64,
}

#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub case: String,
    pub nx: usize,
    pub ny: usize,
    pub t: f64,
    pub steps: usize,
    pub runtime_s: f64,
    pub vars: Vec<VarError>,
}

impl ErrorReport {
    pub fn get(&self, name: &str) -> Option<&VarError> {
        self.vars.iter().find(|v| v.name == name)
    }

    pub fn max_l1(&self) -> f64 {
        self.vars.iter().fold(0.0, |s, v| s.max(v.l1))
    }

    pub fn max_linf(&self) -> f64 {
        self.vars.iter().fold(0.0, |s, v| s.max(v.linf))
    }

    pub fn print(&self) {
        println!(
            "case {} (nx = {}{}, t = {:.6}, {} steps, {:.2}s)",
            self.case,
            self.nx,
            if self.ny > 0 { format!(" x {}", self.ny) } else { String::new() },
            self.t,
            self.steps,
            self.runtime_s
        );
        println!("  {:<10} {:>13} {:>13}", "variable", "L1", "Linf");
        for v in &self.vars {
            println!("  {:<10} {:>13.6e} {:>13.6e}", v.name, v.l1, v.linf);
        }
    }
}

/// Accumulates weighted pointwise differences into per-variable norms.
pub struct NormAccumulator {
    names: Vec<String>,
    l1: Vec<f64>,
    linf: Vec<f64>,
}

impl NormAccumulator {
    pub fn new(names: Vec<String>) -> Self {
        let n = names.len();
        NormAccumulator { names, l1: vec![0.0; n], linf: vec![0.0; n] }
    }

    pub fn add(&mut self, var: usize, weight: f64, diff: f64) {
        let d = diff.abs();
        self.l1[var] += weight * d;
        if d > self.linf[var] {
            self.linf[var] = d;
        }
    }

    pub fn finish(self) -> Vec<VarError> {
        self.names
            .into_iter()
            .zip(self.l1)
            .zip(self.linf)
            .map(|((name, l1), linf)| VarError { name, l1, linf })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub n: usize,
    pub errors: Vec<f64>,
    /// order against the previous row; None on the first row
    pub orders: Vec<Option<f64>>,
    /// set when an error failed to decrease under refinement
    pub non_monotone: bool,
}

#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub case: String,
    pub var_names: Vec<String>,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// Assemble from (mesh, per-variable L1 error) pairs; meshes must refine
    /// by factors of two.
    pub fn build(case: String, var_names: Vec<String>, data: Vec<(usize, Vec<f64>)>) -> Self {
        let mut rows: Vec<ConvergenceRow> = Vec::new();
        for (n, errors) in data {
            let (orders, non_monotone) = match rows.last() {
                None => (vec![None; errors.len()], false),
                Some(prev) => {
                    let ratio = (n as f64 / prev.n as f64).log2();
                    let mut non_monotone = false;
                    let orders = errors
                        .iter()
                        .zip(&prev.errors)
                        .map(|(e, ep)| {
                            if *e >= *ep {
                                non_monotone = true;
                            }
                            if *e > 0.0 && *ep > 0.0 {
                                Some((ep / e).log2() / ratio)
                            } else {
                                None
                            }
                        })
                        .collect();
                    (orders, non_monotone)
                }
            };
            rows.push(ConvergenceRow { n, errors, orders, non_monotone });
        }
        ConvergenceTable { case, var_names, rows }
    }

    /// Observed orders of one variable across all refinements.
    pub fn orders_of(&self, var: &str) -> Vec<f64> {
        let idx = self.var_names.iter().position(|v| v == var);
        let Some(idx) = idx else { return Vec::new() };
        self.rows.iter().filter_map(|r| r.orders[idx]).collect()
    }

    pub fn error_of(&self, var: &str, n: usize) -> Option<f64> {
        let idx = self.var_names.iter().position(|v| v == var)?;
        let row = self.rows.iter().find(|r| r.n == n)?;
        Some(row.errors[idx])
    }

    pub fn print(&self) {
        println!("convergence: {}", self.case);
        print!("  {:>6}", "n");
        for v in &self.var_names {
            print!(" {:>12} {:>6}", v, "order");
        }
        println!();
        for r in &self.rows {
            print!("  {:>6}", r.n);
            for (e, o) in r.errors.iter().zip(&r.orders) {
                match o {
                    Some(o) => print!(" {:>12.4e} {:>6.2}", e, o),
                    None => print!(" {:>12.4e} {:>6}", e, "--"),
                }
            }
            if r.non_monotone {
                print!("  (non-monotone)");
            }
            println!();
        }
    }
}
