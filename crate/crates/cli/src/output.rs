//! JSON, CSV and plain-text rendering.
//!
//! Invariant CSV columns, in order:
//! `u, v, epsilon, delta, volume_sign`, `gamma_ijk` (Gamma^k_ij) and `tau_ijk`
//! (tau_i^j(X_k)) for i, j, k in 1..2 in lexicographic order, `L11 L12 L21 L22`,
//! `C1_111 C1_112 C1_122 C1_222`, the same for `C2`, `F11 F12 F21 F22`,
//! `H11..H14 H21..H24`, `rank_H, sigma1, sigma2, ill_conditioned, kernel_kind,
//! kernel_A, kernel_B, eta, G1, G2, E1..E4, cubic_discrepancy, f_discrepancy,
//! g_discrepancy`. Missing values are empty fields; numbers use the shortest
//! representation that parses back to the same value.

use std::io::Write;

use equiaffine::invariants::{InvariantReport, Kernel};
use equiaffine::jet::Real;
use equiaffine::lagrangian::{OmegaData, PAIRS};
use serde::Serialize;

use crate::commands::{NamedOracle, NamedVerdict};
use crate::config::{CliError, Format};
use crate::verify::VerifyReport;

const IJK: [(usize, usize, usize); 8] = [
    (0, 0, 0),
    (0, 0, 1),
    (0, 1, 0),
    (0, 1, 1),
    (1, 0, 0),
    (1, 0, 1),
    (1, 1, 0),
    (1, 1, 1),
];

pub fn invariant_columns() -> Vec<String> {
    let mut cols: Vec<String> = ["u", "v", "epsilon", "delta", "volume_sign"].map(String::from).to_vec();
    for name in ["gamma", "tau"] {
        cols.extend(IJK.iter().map(|(i, j, k)| format!("{name}_{}{}{}", i + 1, j + 1, k + 1)));
    }
    cols.extend(["L11", "L12", "L21", "L22"].map(String::from));
    for c in ["C1", "C2"] {
        cols.extend(["111", "112", "122", "222"].map(|s| format!("{c}_{s}")));
    }
    cols.extend(["F11", "F12", "F21", "F22"].map(String::from));
    cols.extend((1..=2).flat_map(|i| (1..=4).map(move |j| format!("H{i}{j}"))));
    cols.extend(
        [
            "rank_H",
            "sigma1",
            "sigma2",
            "ill_conditioned",
            "kernel_kind",
            "kernel_A",
            "kernel_B",
            "eta",
            "G1",
            "G2",
            "E1",
            "E2",
            "E3",
            "E4",
            "cubic_discrepancy",
            "f_discrepancy",
            "g_discrepancy",
        ]
        .map(String::from),
    );
    cols
}

/// Shortest round-trip form, switching to exponent notation for tiny values.
fn num(x: Real) -> String {
    format!("{x:?}")
}

fn opt(x: Option<Real>) -> String {
    x.map(num).unwrap_or_default()
}

fn invariant_row(r: &InvariantReport) -> Vec<String> {
    let mut row = vec![num(r.u), num(r.v), r.epsilon.value().to_string(), num(r.delta), num(r.volume_sign)];
    for t in [&r.gamma, &r.tau] {
        row.extend(IJK.iter().map(|&(i, j, k)| num(t[i][j][k])));
    }
    row.extend(r.l.iter().flatten().copied().map(num));
    row.extend(r.c1.as_array().map(num));
    row.extend(r.c2.as_array().map(num));
    row.extend(r.f.iter().flatten().copied().map(num));
    row.extend(r.h.iter().flatten().copied().map(num));
    let (kind, a, b) = match r.kernel_ab {
        Kernel::Any => ("any", None, None),
        Kernel::Direction(d) => ("direction", Some(d[0]), Some(d[1])),
        Kernel::Trivial => ("trivial", None, None),
    };
    row.extend([
        r.rank_h.to_string(),
        num(r.singular_values[0]),
        num(r.singular_values[1]),
        r.ill_conditioned.to_string(),
        kind.to_string(),
        opt(a),
        opt(b),
        opt(r.eta),
        num(r.g1),
        num(r.g2),
    ]);
    row.extend(r.e.map(num));
    row.extend([num(r.cubic_discrepancy), num(r.f_discrepancy), num(r.g_discrepancy)]);
    row
}

fn json_line(value: &impl Serialize, out: &mut impl Write) -> Result<(), CliError> {
    serde_json::to_writer(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn write_csv(header: &[String], rows: impl IntoIterator<Item = Vec<String>>, out: &mut impl Write) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn fmt_mat(m: &[[Real; 2]; 2]) -> String {
    format!("[[{:.6e}, {:.6e}], [{:.6e}, {:.6e}]]", m[0][0], m[0][1], m[1][0], m[1][1])
}

fn fmt_form(w: &[Real; 6]) -> String {
    PAIRS
        .iter()
        .zip(w)
        .filter(|(_, x)| x.abs() > 1e-12)
        .map(|((i, j), x)| format!("{x:+.6} e{}^e{}", i + 1, j + 1))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn invariants(format: Format, reports: &[InvariantReport], out: &mut impl Write) -> Result<(), CliError> {
    match format {
        Format::Json => reports.iter().try_for_each(|r| json_line(r, out)),
        Format::Csv => write_csv(&invariant_columns(), reports.iter().map(invariant_row), out),
        Format::Pretty => {
            for r in reports {
                writeln!(out, "point ({}, {})", r.u, r.v)?;
                writeln!(out, "  epsilon {}  delta {:.6e}", r.epsilon.value(), r.delta)?;
                writeln!(out, "  L {}", fmt_mat(&r.l))?;
                writeln!(out, "  F {}", fmt_mat(&r.f))?;
                let kernel = match r.kernel_ab {
                    Kernel::Any => "any".to_string(),
                    Kernel::Trivial => "trivial".to_string(),
                    Kernel::Direction(d) => format!("[{:.6}, {:.6}]", d[0], d[1]),
                };
                let ill = if r.ill_conditioned { " (ill-conditioned)" } else { "" };
                writeln!(
                    out,
                    "  rank H {}{ill}  sigma [{:.3e}, {:.3e}]  kernel {kernel}",
                    r.rank_h, r.singular_values[0], r.singular_values[1]
                )?;
                let eta = r.eta.map_or("-".to_string(), |x| format!("{x:.6}"));
                writeln!(out, "  eta {eta}  G [{:.6e}, {:.6e}]", r.g1, r.g2)?;
                let e = r.e.iter().fold(0.0, |m: Real, x| m.max(x.abs()));
                writeln!(
                    out,
                    "  max |E| {e:.2e}  discrepancies cubic {:.2e} F {:.2e} G {:.2e}",
                    r.cubic_discrepancy, r.f_discrepancy, r.g_discrepancy
                )?;
            }
            Ok(())
        }
    }
}

pub const VERDICT_COLUMNS: [&str; 14] = [
    "surface",
    "kind",
    "wedge_ratio",
    "oracle_dim",
    "oracle_agrees",
    "max_pde_residual",
    "max_parallel_deviation",
    "grid_points",
    "omega_12",
    "omega_13",
    "omega_14",
    "omega_23",
    "omega_24",
    "omega_34",
];

pub fn verdict(format: Format, v: &NamedVerdict, out: &mut impl Write) -> Result<(), CliError> {
    let ev = &v.verdict.evidence;
    match format {
        Format::Json => json_line(v, out),
        Format::Csv => {
            let mut row = vec![
                v.surface.to_string(),
                format!("{:?}", v.verdict.kind),
                opt(v.verdict.wedge_ratio),
                ev.oracle_dim.map(|d| d.to_string()).unwrap_or_default(),
                ev.oracle_agrees.map(|b| b.to_string()).unwrap_or_default(),
                opt(ev.max_pde_residual),
                opt(ev.max_parallel_deviation),
                ev.grid_points.to_string(),
            ];
            match &v.verdict.omega {
                Some(OmegaData::Single(w)) => row.extend(w.entries.map(num)),
                _ => row.extend(std::iter::repeat_n(String::new(), 6)),
            }
            write_csv(&VERDICT_COLUMNS.map(String::from), [row], out)
        }
        Format::Pretty => {
            writeln!(out, "surface {}: {:?}", v.surface, v.verdict.kind)?;
            match &v.verdict.omega {
                Some(OmegaData::Single(w)) => writeln!(out, "  omega = {}", fmt_form(&w.entries))?,
                Some(OmegaData::Basis(b)) => {
                    for (n, w) in b.iter().enumerate() {
                        writeln!(out, "  basis[{n}] = {}", fmt_form(&w.entries))?;
                    }
                }
                None => {}
            }
            if let Some(r) = v.verdict.wedge_ratio {
                writeln!(out, "  wedge ratio {r:.6}")?;
            }
            let h = ev.rank_histogram;
            writeln!(out, "  {} grid points, rank 0/1/2: {}/{}/{}", ev.grid_points, h[0], h[1], h[2])?;
            if let Some(r) = ev.max_pde_residual {
                writeln!(out, "  max PDE residual {r:.2e}")?;
            }
            if let Some(r) = ev.max_parallel_deviation {
                writeln!(out, "  max parallel deviation {r:.2e}")?;
            }
            if let Some(d) = ev.oracle_dim {
                let agree = ev.oracle_agrees.map_or("-", |b| if b { "yes" } else { "no" });
                writeln!(out, "  oracle dimension {d}, agrees {agree}")?;
            }
            for f in ev.skipped_points.iter().chain(&ev.flagged_points) {
                writeln!(out, "  ({}, {}): {}", f.u, f.v, f.reason)?;
            }
            Ok(())
        }
    }
}

pub const ORACLE_COLUMNS: [&str; 10] = [
    "surface", "dim", "index", "w12", "w13", "w14", "w23", "w24", "w34", "nondegenerate",
];

pub fn oracle(format: Format, o: &NamedOracle, out: &mut impl Write) -> Result<(), CliError> {
    match format {
        Format::Json => json_line(o, out),
        Format::Csv => {
            let rows = o.oracle.basis.iter().zip(&o.oracle.nondegenerate).enumerate().map(|(n, (w, nd))| {
                let mut row = vec![o.surface.to_string(), o.oracle.dim.to_string(), n.to_string()];
                row.extend(w.entries.map(num));
                row.push(nd.to_string());
                row
            });
            write_csv(&ORACLE_COLUMNS.map(String::from), rows, out)
        }
        Format::Pretty => {
            writeln!(
                out,
                "surface {}: null space dimension {} from {} samples ({:?})",
                o.surface, o.oracle.dim, o.oracle.samples, o.kind
            )?;
            for (n, w) in o.oracle.basis.iter().enumerate() {
                writeln!(out, "  basis[{n}] = {}", fmt_form(&w.entries))?;
            }
            let sv: Vec<String> = o.oracle.singular_values.iter().map(|s| format!("{s:.2e}")).collect();
            writeln!(out, "  singular values {}", sv.join(" "))?;
            Ok(())
        }
    }
}

pub const VERIFY_COLUMNS: [&str; 5] = ["name", "max_residual", "tolerance", "evaluated", "pass"];

pub fn verify(format: Format, r: &VerifyReport, out: &mut impl Write) -> Result<(), CliError> {
    match format {
        Format::Json => json_line(r, out),
        Format::Csv => {
            let rows = r.checks.iter().map(|c| {
                vec![
                    c.name.to_string(),
                    num(c.max_residual),
                    num(c.tolerance),
                    c.evaluated.to_string(),
                    c.pass.to_string(),
                ]
            });
            write_csv(&VERIFY_COLUMNS.map(String::from), rows, out)
        }
        Format::Pretty => {
            writeln!(out, "surface {}: {} points, seed {}", r.surface, r.points.len(), r.seed)?;
            for c in &r.checks {
                let mark = if c.pass { "PASS" } else { "FAIL" };
                writeln!(
                    out,
                    "  [{mark}] {:<28} {:.2e} (tol {:.0e}, {} evaluated)",
                    c.name, c.max_residual, c.tolerance, c.evaluated
                )?;
            }
            writeln!(out, "{}", if r.passed { "all checks passed" } else { "some checks failed" })?;
            Ok(())
        }
    }
}
