//! Command-line front end: `generate`, `decompose`, `sweep` and `compare`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chankernel::{ChannelKernel, KernelDims, KernelModel};
use crate::error::{Error, Result};
use crate::hogmt::{decompose, verify_duality, Truncation};
use crate::io::{self, Curve};
use crate::sim::compare_schemes;

/// Duality residual above which `decompose --verify` fails.
pub const VERIFY_TOLERANCE: f64 = 1e-6;

pub const THREADS_ENV: &str = "HOGMT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "hogmt", version, about = "Space-time eigen-decomposition of channel kernels and BER sweeps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw one kernel realization and write it as a binary kernel file.
    Generate {
        /// Preset (identity, mu-mimo-ns, eva-ns) or a TOML file with a [kernel] table.
        #[arg(long)]
        model: String,
        /// Identity kernel dimensions as U,T,U',T' (requires U = U' and T = T').
        #[arg(long, value_parser = parse_dims)]
        dims: Option<KernelDims>,
        /// Seed of the realization.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output kernel file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Decompose a kernel file into its eigensystem.
    Decompose {
        /// Input kernel file.
        kernel: PathBuf,
        /// Truncation policy: `count:<fraction>` or `energy:<fraction>`.
        #[arg(long, default_value = "count:1")]
        keep: String,
        /// Print the duality residual and orthonormality defect; fail above 1e-6.
        #[arg(long)]
        verify: bool,
        /// Output eigensystem file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the sweeps of a config file and write CSVs, a manifest and a table.
    Sweep {
        /// TOML configuration.
        #[arg(long)]
        config: PathBuf,
        /// Output directory, created after every sweep succeeded.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; results do not depend on it.
        #[arg(long, env = THREADS_ENV)]
        threads: Option<usize>,
        /// Also write a BER plot as ber.svg.
        #[arg(long)]
        svg: bool,
    },
    /// Align the CSVs listed in a manifest into one table.
    Compare {
        /// Manifest with lines `<csv> <constellation>`.
        #[arg(long)]
        manifest: PathBuf,
        /// Write the table here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write a BER plot to this file.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
}

fn parse_dims(s: &str) -> std::result::Result<KernelDims, String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|_| format!("'{x}' is not a dimension")))
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [u, t, up, tp] if v.iter().all(|&x| x > 0) => Ok(KernelDims::new(u, t, up, tp)),
        _ => Err("expected four positive integers U,T,U',T'".into()),
    }
}

/// Parses arguments and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if code == 0 { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    match run(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Generate { model, dims, seed, out: path } => generate(&model, dims, seed, &path, out),
        Command::Decompose {
            kernel,
            keep,
            verify,
            out: path,
        } => decompose_cmd(&kernel, &keep, verify, &path, out),
        Command::Sweep {
            config,
            out: dir,
            threads,
            svg,
        } => sweep(&config, &dir, threads, svg, out),
        Command::Compare { manifest, out: path, svg } => compare(&manifest, path.as_deref(), svg.as_deref(), out),
    }
}

fn resolve_model(model: &str, dims: Option<KernelDims>) -> Result<KernelModel> {
    let resolved = match KernelModel::preset(model) {
        Some(m) => m,
        None => {
            let path = Path::new(model);
            if !path.exists() {
                return Err(Error::Config(format!(
                    "'{model}' is neither a preset (identity, mu-mimo-ns, eva-ns) nor a file"
                )));
            }
            let text = fs::read_to_string(path)?;
            let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Parse {
                path: path.to_path_buf(),
                message: e.message().to_string(),
            })?;
            let kernel = match table.get("kernel") {
                Some(toml::Value::Table(t)) => t.clone(),
                Some(_) => return Err(Error::Config("'kernel' must be a table".into())),
                None => table,
            };
            io::parse_kernel_table(&kernel).map_err(|m| Error::Validation {
                path: path.to_path_buf(),
                violations: vec![m],
            })?
        }
    };
    let resolved = match (resolved, dims) {
        (m, None) => m,
        (KernelModel::Identity { sample_period_s, .. }, Some(d)) => {
            if d.n_rx_space != d.n_tx_space || d.n_rx_time != d.n_tx_time {
                return Err(Error::Config(format!("identity kernel needs U = U' and T = T', got {d:?}")));
            }
            KernelModel::Identity {
                n_space: d.n_rx_space,
                n_time: d.n_rx_time,
                sample_period_s,
            }
        }
        (_, Some(_)) => return Err(Error::Config("--dims applies only to the identity model".into())),
    };
    let v = resolved.validate();
    if !v.is_empty() {
        return Err(Error::Config(v.join("; ")));
    }
    Ok(resolved)
}

fn generate(model: &str, dims: Option<KernelDims>, seed: u64, path: &Path, out: &mut dyn Write) -> Result<()> {
    let m = resolve_model(model, dims)?;
    let kernel = m.realize(&mut ChaCha8Rng::seed_from_u64(seed))?;
    io::save_kernel(&kernel, path)?;
    summarize(&kernel, out)?;
    writeln!(out, "wrote {}", path.display())?;
    Ok(())
}

fn summarize(k: &ChannelKernel, out: &mut dyn Write) -> Result<()> {
    let d = k.dims();
    writeln!(
        out,
        "kernel U={} T={} U'={} T'={} entries={} frobenius={:.6e} sample_period_s={:e}",
        d.n_rx_space,
        d.n_rx_time,
        d.n_tx_space,
        d.n_tx_time,
        d.len(),
        k.frobenius_norm(),
        k.sample_period()
    )?;
    Ok(())
}

fn decompose_cmd(kernel: &Path, keep: &str, verify: bool, path: &Path, out: &mut dyn Write) -> Result<()> {
    let keep = Truncation::parse(keep)?;
    let k = io::load_kernel(kernel)?;
    summarize(&k, out)?;
    let eig = decompose(&k, keep)?;
    writeln!(
        out,
        "eigenfunctions N={} kept={} ({keep}) sigma_max={:.6e} sigma_min_kept={:.6e}",
        eig.n_total(),
        eig.n_kept(),
        eig.sigmas().first().copied().unwrap_or(0.0),
        eig.kept_sigmas().last().copied().unwrap_or(0.0)
    )?;
    if verify {
        let residual = verify_duality(&k, &eig)?;
        let defect = eig.orthonormality_defect();
        writeln!(out, "duality_residual={residual:.3e}")?;
        writeln!(out, "orthonormality_defect={defect:.3e}")?;
        if !(residual <= VERIFY_TOLERANCE) {
            return Err(Error::Numeric(format!(
                "duality residual {residual:.3e} exceeds {VERIFY_TOLERANCE:e}; nothing written"
            )));
        }
    }
    io::save_eigensystem(&eig, path)?;
    writeln!(out, "wrote {}", path.display())?;
    Ok(())
}

fn sweep(config: &Path, dir: &Path, threads: Option<usize>, svg: bool, out: &mut dyn Write) -> Result<()> {
    let doc = io::load_config(config)?;
    let comparison = compare_schemes(&doc.sweeps, threads)?;
    let table = comparison.table();
    let curves: Vec<Curve> = comparison.results.iter().map(Curve::from).collect();
    let plot = if svg { Some(io::ber_svg(&curves)?) } else { None };

    fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for r in &comparison.results {
        let name = format!("{}.csv", r.label);
        io::write_atomic(&dir.join(&name), io::result_csv(r).as_bytes())?;
        writeln!(out, "{}: {} points in {:.2} s", r.label, r.points.len(), r.wall_time_s)?;
        entries.push((name, r.constellation));
    }
    io::write_atomic(&dir.join("manifest.txt"), io::manifest_text(&entries).as_bytes())?;
    io::write_atomic(&dir.join("table.txt"), table.as_bytes())?;
    if let Some(s) = plot {
        io::write_atomic(&dir.join("ber.svg"), s.as_bytes())?;
    }
    write!(out, "{table}")?;
    writeln!(out, "wrote {}", dir.display())?;
    Ok(())
}

fn compare(manifest: &Path, path: Option<&Path>, svg: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let curves = io::load_curves(manifest)?;
    let table = io::curves_table(&curves)?;
    if let Some(s) = svg {
        io::write_atomic(s, io::ber_svg(&curves)?.as_bytes())?;
    }
    match path {
        Some(p) => {
            io::write_atomic(p, table.as_bytes())?;
            writeln!(out, "wrote {}", p.display())?;
        }
        None => write!(out, "{table}")?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims_parse() {
        assert_eq!(parse_dims("1,4,1,4").unwrap(), KernelDims::new(1, 4, 1, 4));
        assert!(parse_dims("1,4,1").is_err());
        assert!(parse_dims("1,0,1,4").is_err());
        assert!(parse_dims("a,4,1,4").is_err());
    }

    #[test]
    fn dims_only_for_identity() {
        assert!(resolve_model("eva-ns", Some(KernelDims::new(1, 4, 1, 4))).is_err());
        assert!(resolve_model("identity", Some(KernelDims::new(1, 4, 1, 5))).is_err());
        assert_eq!(
            resolve_model("identity", Some(KernelDims::new(2, 4, 2, 4))).unwrap().dims(),
            KernelDims::new(2, 4, 2, 4)
        );
        assert_eq!(resolve_model("nope", None).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn help_and_usage_codes() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        assert_eq!(main_with_args(["hogmt", "--help"], &mut o, &mut e), 0);
        assert_eq!(main_with_args(["hogmt", "bogus"], &mut o, &mut e), 2);
    }
}
