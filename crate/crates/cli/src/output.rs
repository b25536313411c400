//! Output files. Data files (CSV, manifest) depend only on the configuration
//! and are bitwise reproducible in serial mode; wall times go to the run
//! summary only.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use fosb::solve::write_rcs_csv;
use fosb::uq::{variance_bands, write_uq_csv};
use fosb::vec3;

use crate::config::ExperimentConfig;
use crate::experiments::{BlockRow, Deterministic, FoaStudy, Results, RunError, UqStudy, Verdict};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Comment lines heading every output file.
pub fn header(cfg: &ExperimentConfig) -> Vec<String> {
    vec![format!("fosb-em {VERSION}"), format!("config-sha256 {}", cfg.hash()), format!("experiment {}", cfg.experiment)]
}

struct Writer<'a> {
    dir: &'a Path,
    header: Vec<String>,
    files: Vec<PathBuf>,
}

impl Writer<'_> {
    fn file(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>, &[String]) -> std::io::Result<()>) -> Result<(), RunError> {
        let path = self.dir.join(name);
        let err = |e: std::io::Error| RunError { stage: "output", message: format!("{}: {e}", path.display()) };
        let mut w = BufWriter::new(File::create(&path).map_err(err)?);
        body(&mut w, &self.header).and_then(|_| w.flush()).map_err(err)?;
        self.files.push(path);
        Ok(())
    }

    fn text(&mut self, name: &str, text: &str) -> Result<(), RunError> {
        self.file(name, |w, h| {
            for c in h {
                writeln!(w, "# {c}")?;
            }
            w.write_all(text.as_bytes())
        })
    }
}

fn deterministic_files(w: &mut Writer, d: &Deterministic) -> Result<(), RunError> {
    for (row, r) in d.rows.iter().zip(&d.rcs) {
        w.file(&format!("rcs_level{}.csv", row.level), |f, h| write_rcs_csv(f, h, r))?;
    }
    if let Some(r) = &d.reference {
        w.file("rcs_mie.csv", |f, h| write_rcs_csv(f, h, r))?;
    }
    let mut s = String::from("level,precision,h,dofs,iterations,error\n");
    for r in &d.rows {
        let e = r.error.map_or(String::new(), |e| format!("{e:.17e}"));
        writeln!(s, "{},{:?},{:.17e},{},{},{e}", r.level, r.precision, r.h, r.dofs, r.iterations).unwrap();
    }
    w.text("convergence.csv", &s)
}

fn foa_files(w: &mut Writer, st: &FoaStudy) -> Result<(), RunError> {
    w.file("rcs_nominal.csv", |f, h| write_rcs_csv(f, h, &st.nominal))?;
    let mut s = String::from("t,zoa,foa,inverted\n");
    for r in &st.rows {
        writeln!(s, "{:?},{:.17e},{:.17e},{}", r.t, r.zoa, r.foa, r.inverted).unwrap();
    }
    w.text("foa_errors.csv", &s)
}

fn uq_files(w: &mut Writer, cfg: &ExperimentConfig, st: &UqStudy) -> Result<(), RunError> {
    let reference = vec3::cnorm(cfg.wave().map_err(|e| RunError { stage: "wave", message: e.to_string() })?.p);
    let band_err = |e: fosb::uq::UqError| RunError { stage: "bands", message: e.to_string() };
    w.file("uq_fosb.csv", |f, h| write_uq_csv(f, h, &st.bands))?;
    if let Some(full) = &st.full {
        let bands = variance_bands(&st.nominal, &full.components, reference).map_err(band_err)?;
        w.file("uq_full_tensor.csv", |f, h| write_uq_csv(f, h, &bands))?;
    }
    if let Some(mc) = &st.mc {
        let bands = variance_bands(&mc.mean_far_field(), &mc.variance, reference).map_err(band_err)?;
        w.file("uq_monte_carlo.csv", |f, h| write_uq_csv(f, h, &bands))?;
    }
    let mut m = String::new();
    writeln!(m, "seed = {}", cfg.seed).unwrap();
    writeln!(m, "runs = {}", st.mc.as_ref().map_or(0, |m| m.runs)).unwrap();
    writeln!(m, "t = {:?}", st.t).unwrap();
    writeln!(m, "l0 = {}", cfg.l0).unwrap();
    writeln!(m, "l = {}", cfg.l).unwrap();
    for (l, (d, h)) in st.dims.iter().zip(&st.widths).enumerate() {
        let r = cfg.precisions.get(l).map_or("mesh".to_string(), |r| format!("{r:?}"));
        writeln!(m, "level {l} = precision {r}, h {h:.6e}, dofs {d}").unwrap();
    }
    if let Some(mc) = &st.mc {
        writeln!(m, "mc_iterations = {}", mc.iterations.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", ")).unwrap();
    }
    w.text("manifest.txt", &m)
}

fn block_line(s: &mut String, name: &str, b: &BlockRow) {
    writeln!(
        s,
        "{name} ({}, {}) sign {:+} multiplicity {} dims {}x{} iterations {} residual {:.3e} seconds {:.3}",
        b.l1, b.l2, b.sign, b.multiplicity, b.rows, b.cols, b.iterations, b.residual, b.seconds
    )
    .unwrap();
}

/// Human-readable run summary with timings.
pub fn summary(cfg: &ExperimentConfig, results: &Results, verdicts: &[Verdict], seconds: f64) -> String {
    let mut s = String::new();
    writeln!(s, "experiment = {}", cfg.experiment).unwrap();
    writeln!(s, "wall_seconds = {seconds:.3}").unwrap();
    let det = |s: &mut String, d: &Deterministic| {
        for r in &d.rows {
            let e = r.error.map_or("n/a".to_string(), |e| format!("{e:.4e}"));
            writeln!(s, "level {} dofs {} h {:.4e} iterations {} seconds {:.3} rcs_z_error {e}", r.level, r.dofs, r.h, r.iterations, r.seconds).unwrap();
        }
        if let Some(sl) = d.slope {
            writeln!(s, "convergence_slope = {sl:.4}").unwrap();
        }
    };
    match results {
        Results::Deterministic(d) => det(&mut s, d),
        Results::Foa(f) => {
            writeln!(s, "dofs = {}", f.dofs).unwrap();
            for r in &f.rows {
                writeln!(s, "t {} zoa {:.4e} foa {:.4e} inverted {} seconds {:.3}", r.t, r.zoa, r.foa, r.inverted, r.seconds).unwrap();
            }
            let fmt = |x: Option<f64>| x.map_or("n/a".into(), |x| format!("{x:.4}"));
            writeln!(s, "zoa_slope = {}", fmt(f.zoa_slope)).unwrap();
            writeln!(s, "foa_slope = {}", fmt(f.foa_slope)).unwrap();
        }
        Results::Uq { deterministic, uq } => {
            if let Some(d) = deterministic {
                det(&mut s, d);
            }
            for (l, d) in uq.dims.iter().enumerate() {
                writeln!(s, "level {l} dofs {d} setup_seconds {:.3} nominal_iterations {}", uq.setup_seconds[l], uq.nominal_iterations[l]).unwrap();
            }
            for b in &uq.blocks {
                block_line(&mut s, "block", b);
            }
            if let Some(b) = &uq.full_block {
                block_line(&mut s, "full", b);
            }
            let e = &uq.efficiency;
            writeln!(s, "n_full = {}", e.full).unwrap();
            writeln!(s, "n_hat = {}", e.n_hat).unwrap();
            writeln!(s, "n_hat_all_blocks = {}", e.n_hat_all).unwrap();
            writeln!(s, "n_hat_max = {}", e.n_hat_max).unwrap();
            writeln!(s, "efficiency = {:.4}", e.efficiency()).unwrap();
            writeln!(s, "efficiency_rounded_numerator = {:.4}", e.efficiency_rounded_numerator()).unwrap();
            writeln!(s, "efficiency_max = {:.4}", e.efficiency_max()).unwrap();
            writeln!(s, "variance_clamp = {:.3e}", uq.ct.clamped).unwrap();
            let triple = |x: &[f64; 3]| format!("x {:.4e} y {:.4e} z {:.4e}", x[0], x[1], x[2]);
            if let Some(x) = &uq.ct_vs_full {
                writeln!(s, "ct_vs_full = {}", triple(x)).unwrap();
            }
            if let Some(x) = &uq.mc_variance_error {
                writeln!(s, "fosb_vs_mc_variance = {}", triple(x)).unwrap();
            }
            if let Some(x) = &uq.coverage {
                writeln!(s, "band_coverage = {}", triple(x)).unwrap();
            }
            if uq.mc.is_some() {
                writeln!(s, "mc_seconds = {:.3}", uq.mc_seconds).unwrap();
            }
        }
    }
    for v in verdicts {
        writeln!(s, "check {v}").unwrap();
    }
    s
}

/// Writes every output of `results` into `dir`; returns the paths written.
pub fn write_outputs(cfg: &ExperimentConfig, results: &Results, verdicts: &[Verdict], seconds: f64, dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    let mut w = Writer { dir, header: header(cfg), files: Vec::new() };
    w.text("config.txt", &cfg.serialize())?;
    match results {
        Results::Deterministic(d) => deterministic_files(&mut w, d)?,
        Results::Foa(f) => foa_files(&mut w, f)?,
        Results::Uq { deterministic, uq } => {
            if let Some(d) = deterministic {
                deterministic_files(&mut w, d)?;
            }
            uq_files(&mut w, cfg, uq)?;
        }
    }
    let verdict_text: String = verdicts.iter().map(|v| format!("{v}\n")).collect();
    w.text("checks.txt", &verdict_text)?;
    w.text("run_summary.txt", &summary(cfg, results, verdicts, seconds))?;
    Ok(w.files)
}
