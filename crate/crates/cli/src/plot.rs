//! Gnuplot scripts for the figure presets. The scripts read the comparison
//! CSV directly and pick series out by column value.

use std::collections::BTreeSet;
use std::fmt::Write;

use crate::run::{CompareRow, COMPARE_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// Φ against `P_bit`, one series per `(V, k)`.
    BitError,
    /// Φ against `k`, one series per `V_u`.
    TrustDiversity,
}

fn col(name: &str) -> usize {
    COMPARE_HEADER
        .iter()
        .position(|h| *h == name)
        .expect("known column")
        + 1
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

pub fn gnuplot_script(
    figure: Figure,
    csv_path: &str,
    image_path: &str,
    rows: &[CompareRow],
) -> String {
    let (v, k, vu, p) = (
        col("servers"),
        col("repetitions"),
        col("trusted_per_client"),
        col("bit_error"),
    );
    let (an, nu, ci) = (col("phi_analytic"), col("phi_empirical"), col("ci95"));

    // (filter expression, x column, label)
    let series: Vec<(String, usize, String)> = match figure {
        Figure::BitError => {
            let keys: BTreeSet<(u32, u32)> = rows
                .iter()
                .map(|r| (r.params.servers, r.params.repetitions))
                .collect();
            keys.into_iter()
                .map(|(sv, sk)| {
                    (
                        format!("${v}=={sv} && ${k}=={sk}"),
                        p,
                        format!("V={sv} k={sk}"),
                    )
                })
                .collect()
        }
        Figure::TrustDiversity => {
            let keys: BTreeSet<(u32, u32)> = rows
                .iter()
                .map(|r| (r.params.servers, r.params.trusted_per_client))
                .collect();
            keys.into_iter()
                .map(|(sv, su)| {
                    (
                        format!("${v}=={sv} && ${vu}=={su}"),
                        k,
                        format!("V={sv} V_u={su}"),
                    )
                })
                .collect()
        }
    };

    let mut s = String::new();
    let data = quote(csv_path);
    writeln!(s, "# gnuplot script; run with: gnuplot <this file>").unwrap();
    writeln!(s, "set datafile separator \",\"").unwrap();
    writeln!(s, "set datafile commentschars \"#\"").unwrap();
    writeln!(s, "set terminal pngcairo size 900,600").unwrap();
    writeln!(s, "set output {}", quote(image_path)).unwrap();
    match figure {
        Figure::BitError => {
            writeln!(s, "set xlabel \"P_bit\"").unwrap();
            writeln!(s, "set format x \"%.0e\"").unwrap();
        }
        Figure::TrustDiversity => {
            writeln!(s, "set xlabel \"k\"").unwrap();
            writeln!(s, "set xtics 1").unwrap();
        }
    }
    writeln!(s, "set ylabel \"Phi\"").unwrap();
    writeln!(s, "set key top left").unwrap();
    if series.is_empty() {
        writeln!(s, "# no data rows").unwrap();
        return s;
    }
    let mut clauses = Vec::new();
    for (i, (filter, x, label)) in series.iter().enumerate() {
        let lc = i + 1;
        clauses.push(format!(
            "{data} using (({filter}) ? ${x} : NaN):{an} with lines lc {lc} title {}",
            quote(&format!("an. {label}"))
        ));
        clauses.push(format!(
            "{data} using (({filter}) ? ${x} : NaN):{nu}:{ci} with yerrorbars lc {lc} pt 7 title {}",
            quote(&format!("nu. {label}"))
        ));
    }
    writeln!(s, "plot \\\n  {}", clauses.join(", \\\n  ")).unwrap();
    s
}
