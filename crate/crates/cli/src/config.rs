//! Run configuration: CLI flags layered over an optional `key = value` file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use sha2::{Digest, Sha256};

use bernoulli_walk::ensemble::EnsembleKind;

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Realsym,
    Antisym,
    Rect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Hamming,
    Spectra,
    Moments,
    Oracle,
    Stationary,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Hamming => "hamming",
            Self::Spectra => "spectra",
            Self::Moments => "moments",
            Self::Oracle => "oracle",
            Self::Stationary => "stationary",
        }
    }

    fn default_n(self) -> usize {
        match self {
            Self::Hamming | Self::Spectra => 50,
            Self::Stationary => 200,
            Self::Moments => 100,
            Self::Oracle => 4,
        }
    }
}

/// Flags shared by every subcommand. Unset flags fall back to the config
/// file, then to per-command defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Ensemble: real symmetric, imaginary antisymmetric or rectangular.
    #[arg(long, global = true, value_enum)]
    pub kind: Option<KindArg>,
    /// Matrix size N (rows for rectangular).
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Columns M of a rectangular matrix (default N/2).
    #[arg(long, global = true)]
    pub m: Option<usize>,
    /// Master seed; required by every stochastic subcommand.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Independent walkers to simulate.
    #[arg(long, global = true)]
    pub walkers: Option<u64>,
    /// Length of simulated walks in scaled time η = t/d_N.
    #[arg(long = "eta-max", global = true)]
    pub eta_max: Option<f64>,
    /// Burst exponent c, Δt = round(N^c).
    #[arg(long, global = true)]
    pub c: Option<f64>,
    /// Explicit burst length Δt (overrides --c).
    #[arg(long, global = true)]
    pub dt: Option<usize>,
    /// Bursts (moments) or sampler draws (oracle).
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Independent stationary matrices for histograms and spacings.
    #[arg(long, global = true)]
    pub draws: Option<usize>,
    /// Use exact rational arithmetic where available (oracle).
    #[arg(long, global = true)]
    pub exact: bool,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Comma-separated output formats.
    #[arg(long, global = true, value_enum, value_delimiter = ',')]
    pub format: Option<Vec<Format>>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// `key = value` configuration file; flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub kind: EnsembleKind,
    pub seed: Option<u64>,
    pub walkers: u64,
    pub eta_max: f64,
    pub c: f64,
    pub dt: Option<usize>,
    pub samples: usize,
    pub draws: usize,
    pub exact: bool,
    pub out: PathBuf,
    pub formats: Vec<Format>,
    pub threads: Option<usize>,
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, Failure> {
    value.parse().map_err(|_| usage(format!("config: cannot parse {key} = {value:?}")))
}

/// Fills unset `flags` from the text of a config file.
pub fn merge_file(flags: &mut Flags, text: &str, origin: &Path) -> Result<(), Failure> {
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("{}:{}: expected key = value", origin.display(), lineno + 1)))?;
        let (key, value) = (key.trim().replace('_', "-"), value.trim());
        match key.as_str() {
            "kind" => {
                let k = KindArg::from_str(value, true).map_err(|_| usage(format!("config: unknown kind {value:?}")))?;
                flags.kind.get_or_insert(k);
            }
            "n" => _ = flags.n.get_or_insert(parse(&key, value)?),
            "m" => _ = flags.m.get_or_insert(parse(&key, value)?),
            "seed" => _ = flags.seed.get_or_insert(parse(&key, value)?),
            "walkers" => _ = flags.walkers.get_or_insert(parse(&key, value)?),
            "eta-max" => _ = flags.eta_max.get_or_insert(parse(&key, value)?),
            "c" => _ = flags.c.get_or_insert(parse(&key, value)?),
            "dt" => _ = flags.dt.get_or_insert(parse(&key, value)?),
            "samples" => _ = flags.samples.get_or_insert(parse(&key, value)?),
            "draws" => _ = flags.draws.get_or_insert(parse(&key, value)?),
            "threads" => _ = flags.threads.get_or_insert(parse(&key, value)?),
            "exact" => flags.exact |= parse::<bool>(&key, value)?,
            "out" => _ = flags.out.get_or_insert(PathBuf::from(value)),
            "format" => {
                if flags.format.is_none() {
                    let formats = value
                        .split(',')
                        .map(|f| Format::from_str(f.trim(), true).map_err(|_| usage(format!("config: unknown format {f:?}"))))
                        .collect::<Result<_, _>>()?;
                    flags.format = Some(formats);
                }
            }
            other => return Err(usage(format!("{}:{}: unknown key {other:?}", origin.display(), lineno + 1))),
        }
    }
    Ok(())
}

impl RunConfig {
    pub fn resolve(command: Command, mut flags: Flags) -> Result<Self, Failure> {
        if let Some(path) = flags.config.clone() {
            let text = std::fs::read_to_string(&path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
            merge_file(&mut flags, &text, &path)?;
        }
        let n = flags.n.unwrap_or(command.default_n());
        let kind = match flags.kind.unwrap_or(KindArg::Realsym) {
            KindArg::Realsym => EnsembleKind::RealSymmetric { n },
            KindArg::Antisym => EnsembleKind::ImaginaryAntisymmetric { n },
            KindArg::Rect => EnsembleKind::Rectangular { n, m: flags.m.unwrap_or((n / 2).max(1)) },
        };
        let kind = kind.validated().map_err(|e| usage(e.to_string()))?;
        let walkers = flags.walkers.unwrap_or(match command {
            Command::Hamming => 5,
            Command::Spectra => 1,
            _ => 0,
        });
        let eta_max = flags.eta_max.unwrap_or(match command {
            Command::Spectra => 2.0,
            _ => 6.0,
        });
        let cfg = Self {
            command,
            kind,
            seed: flags.seed,
            walkers,
            eta_max,
            c: flags.c.unwrap_or(bernoulli_walk::moments::DEFAULT_C),
            dt: flags.dt,
            samples: flags.samples.unwrap_or(match command {
                Command::Oracle => 100_000,
                _ => 10_000,
            }),
            draws: flags.draws.unwrap_or(match command {
                Command::Stationary => 500,
                _ => 0,
            }),
            exact: flags.exact,
            out: flags.out.unwrap_or_else(|| PathBuf::from("out")),
            formats: flags.format.unwrap_or_else(|| vec![Format::Csv, Format::Json]),
            threads: flags.threads,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn stochastic(&self) -> bool {
        match self.command {
            Command::Hamming | Command::Spectra => self.walkers > 0 || self.draws > 0,
            Command::Moments | Command::Oracle | Command::Stationary => true,
        }
    }

    fn validate(&self) -> Result<(), Failure> {
        if self.stochastic() && self.seed.is_none() {
            return Err(usage(format!("{} needs --seed", self.command.name())));
        }
        if !(self.eta_max > 0.0 && self.eta_max.is_finite()) {
            return Err(usage(format!("--eta-max must be positive, got {}", self.eta_max)));
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(usage(format!("--c must lie in (0, 1), got {}", self.c)));
        }
        if self.dt == Some(0) {
            return Err(usage("--dt must be at least 1"));
        }
        if self.command == Command::Moments && self.samples < 100 {
            return Err(usage(format!("moments needs --samples >= 100, got {}", self.samples)));
        }
        if self.threads == Some(0) {
            return Err(usage("--threads must be at least 1"));
        }
        if self.formats.is_empty() {
            return Err(usage("--format needs at least one of csv, json"));
        }
        Ok(())
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    /// Canonical text of every setting that affects results.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command={}", self.command.name());
        let _ = writeln!(s, "kind={}", self.kind.short_name());
        let _ = writeln!(s, "n={}", self.kind.n());
        let _ = writeln!(s, "m={}", self.kind.cols());
        let _ = writeln!(s, "seed={}", self.seed.map_or("none".to_string(), |x| x.to_string()));
        let _ = writeln!(s, "walkers={}", self.walkers);
        let _ = writeln!(s, "eta-max={}", self.eta_max);
        let _ = writeln!(s, "c={}", self.c);
        let _ = writeln!(s, "dt={}", self.dt.map_or("auto".to_string(), |x| x.to_string()));
        let _ = writeln!(s, "samples={}", self.samples);
        let _ = writeln!(s, "draws={}", self.draws);
        let _ = writeln!(s, "exact={}", self.exact);
        s
    }

    /// First 16 hex digits of the SHA-256 of [`canonical`](Self::canonical).
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn seed_or_zero(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags() -> Flags {
        Flags { seed: Some(1), ..Flags::default() }
    }

    #[test]
    fn defaults_per_command() {
        let c = RunConfig::resolve(Command::Hamming, flags()).unwrap();
        assert_eq!(c.kind, EnsembleKind::RealSymmetric { n: 50 });
        assert_eq!((c.walkers, c.eta_max), (5, 6.0));
        let c = RunConfig::resolve(Command::Moments, Flags { kind: Some(KindArg::Rect), ..flags() }).unwrap();
        assert_eq!(c.kind, EnsembleKind::Rectangular { n: 100, m: 50 });
    }

    #[test]
    fn file_entries_fill_only_unset_flags() {
        let mut f = Flags { n: Some(7), ..Flags::default() };
        let text = "# comment\nkind = antisym\nn = 9\nseed = 42\neta_max = 1.5\nformat = json\n";
        merge_file(&mut f, text, Path::new("run.cfg")).unwrap();
        assert_eq!(f.kind, Some(KindArg::Antisym));
        assert_eq!(f.n, Some(7));
        assert_eq!(f.seed, Some(42));
        assert_eq!(f.eta_max, Some(1.5));
        assert_eq!(f.format, Some(vec![Format::Json]));
        assert!(matches!(merge_file(&mut f, "colour = red", Path::new("x")), Err(Failure::Usage(_))));
        assert!(matches!(merge_file(&mut f, "no equals sign", Path::new("x")), Err(Failure::Usage(_))));
    }

    #[test]
    fn invalid_settings_are_usage_errors() {
        for f in [
            Flags { seed: None, ..Flags::default() },
            Flags { dt: Some(0), ..flags() },
            Flags { eta_max: Some(0.0), ..flags() },
            Flags { c: Some(1.0), ..flags() },
            Flags { n: Some(0), ..flags() },
        ] {
            assert!(matches!(RunConfig::resolve(Command::Moments, f), Err(Failure::Usage(_))));
        }
        // exact curves alone need no seed
        assert!(RunConfig::resolve(Command::Hamming, Flags { walkers: Some(0), ..Flags::default() }).is_ok());
    }

    #[test]
    fn hash_tracks_results_not_output_location() {
        let a = RunConfig::resolve(Command::Hamming, flags()).unwrap();
        let b = RunConfig::resolve(Command::Hamming, Flags { out: Some("elsewhere".into()), threads: Some(2), ..flags() }).unwrap();
        let c = RunConfig::resolve(Command::Hamming, Flags { seed: Some(2), ..flags() }).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 16);
    }
}
