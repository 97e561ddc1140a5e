//! CSV field dumps with fixed column orders.

use std::path::Path;

use anyhow::{Context, Result};
use voltra::bsvie::FlowReport;
use voltra::family::FamilyField;
use voltra::system::{IterateNorms, TraceEntry};
use voltra::{Iterate, PathEnsemble, ProcessField};

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))
}

fn push(row: &mut Vec<String>, xs: &[f64]) {
    row.extend(xs.iter().map(|x| x.to_string()));
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|k| format!("{prefix}{k}")).collect()
}

/// `z` columns are named `{prefix}{component}_{noise}`.
fn matrix_names(prefix: &str, d: usize, m: usize) -> Vec<String> {
    (0..d).flat_map(|k| (0..m).map(move |j| format!("{prefix}{k}_{j}"))).collect()
}

/// `path, node, time, x0, x1, …`
pub fn ensemble(path: &Path, ens: &PathEnsemble) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["path".to_string(), "node".into(), "time".into()];
    header.extend(names("x", ens.state_dim()));
    w.write_record(&header)?;
    for p in 0..ens.n_paths() {
        for i in 0..ens.n_nodes() {
            let mut row = vec![p.to_string(), i.to_string(), ens.grid().t(i).to_string()];
            push(&mut row, ens.x(p, i));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `s_node, t_node, path, y*, z*_*, dy*, dz*_*` for every member `s_j`.
pub fn family(path: &Path, fam: &FamilyField, ens: &PathEnsemble) -> Result<()> {
    let mut w = writer(path)?;
    let (d, m) = (fam.u[0].dim(), ens.noise_dim());
    let mut header = vec!["s_node".to_string(), "t_node".into(), "path".into()];
    header.extend(names("y", d));
    header.extend(matrix_names("z", d, m));
    header.extend(names("dy", d));
    header.extend(matrix_names("dz", d, m));
    w.write_record(&header)?;
    for j in 0..fam.u.len() {
        for i in 0..ens.n_nodes() {
            for p in 0..ens.n_paths() {
                let mut row = vec![j.to_string(), i.to_string(), p.to_string()];
                for f in [&fam.u[j], &fam.v[j], &fam.du[j], &fam.dv[j]] {
                    push(&mut row, f.get(i, p));
                }
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `node, time, path, cal_y*, cal_z*_*, diag_u*, diag_v*_*, diag_du*`.
pub fn diagonal(path: &Path, it: &Iterate, ens: &PathEnsemble) -> Result<()> {
    let mut w = writer(path)?;
    let (d1, d2, m) = (it.cal_y.dim(), it.family.diag_u.dim(), ens.noise_dim());
    let mut header = vec!["node".to_string(), "time".into(), "path".into()];
    header.extend(names("cal_y", d1));
    header.extend(matrix_names("cal_z", d1, m));
    header.extend(names("diag_u", d2));
    header.extend(matrix_names("diag_v", d2, m));
    header.extend(names("diag_du", d2));
    w.write_record(&header)?;
    let f = &it.family;
    for i in 0..ens.n_nodes() {
        for p in 0..ens.n_paths() {
            let mut row = vec![i.to_string(), ens.grid().t(i).to_string(), p.to_string()];
            for field in [&it.cal_y, &it.cal_z, &f.diag_u, &f.diag_v, &f.diag_du] {
                push(&mut row, field.get(i, p));
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

const NORM_FIELDS: [&str; 8] = ["cal_y", "cal_z", "u", "v", "diag_v", "du", "dv", "total"];

fn norm_values(n: &IterateNorms) -> [f64; 8] {
    [n.cal_y, n.cal_z, n.u, n.v, n.diag_v, n.du, n.dv, n.total]
}

/// `iteration, norm_<part>…, diff_<part>…` with parts
/// `cal_y, cal_z, u, v, diag_v, du, dv, total`.
pub fn trace(path: &Path, trace: &[TraceEntry]) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["iteration".to_string()];
    header.extend(NORM_FIELDS.iter().map(|f| format!("norm_{f}")));
    header.extend(NORM_FIELDS.iter().map(|f| format!("diff_{f}")));
    w.write_record(&header)?;
    for t in trace {
        let mut row = vec![t.iteration.to_string()];
        push(&mut row, &norm_values(&t.norms));
        push(&mut row, &norm_values(&t.diff));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `node, path, a*` over nodes `0..N`; one action column per player.
pub fn policy(path: &Path, actions: &ProcessField, n_steps: usize) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["node".to_string(), "path".into()];
    if actions.dim() == 1 {
        header.push("a".into());
    } else {
        header.extend(names("a", actions.dim()));
    }
    w.write_record(&header)?;
    for i in 0..n_steps {
        for p in 0..actions.n_paths() {
            let mut row = vec![i.to_string(), p.to_string()];
            push(&mut row, actions.get(i, p));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `a, b, path, with*, without*`: flow residuals with and without the
/// `∂Y` correction, per pair and path.
pub fn flow(path: &Path, with: &FlowReport, without: &FlowReport, n_paths: usize, d: usize) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["a".to_string(), "b".into(), "path".into()];
    header.extend(names("with", d));
    header.extend(names("without", d));
    w.write_record(&header)?;
    for (k, &(a, b)) in with.pairs.iter().enumerate() {
        for p in 0..n_paths {
            let at = (k * n_paths + p) * d;
            let mut row = vec![a.to_string(), b.to_string(), p.to_string()];
            push(&mut row, &with.values[at..at + d]);
            push(&mut row, &without.values[at..at + d]);
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}
