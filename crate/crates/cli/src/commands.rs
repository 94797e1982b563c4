use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use saeti::csvio::{load_series, save_series};
use saeti::mpdist::default_inner_window;
use saeti::pipeline::impute_with_stats;
use saeti::scenarios::{
    baseline_linear, baseline_mean, default_ts_nbr_gap, gen_blackout, gen_mcar, gen_ts_nbr, rmse, rmse_per_coord,
    GapMask, ScenarioKind,
};
use saeti::snippets::find_snippets;
use saeti::training::{load_bundle, save_bundle, train as train_models, Trained, TrainConfig};
use saeti::{Error, TimeSeries};

use crate::{EvaluateArgs, GapArgs, ImputeArgs, SnippetsArgs, TrainArgs};

pub struct CliError {
    pub code: u8,
    pub message: String,
}

type CliResult<T = ()> = Result<T, CliError>;

fn usage(message: impl Into<String>) -> CliError {
    CliError {
        code: 2,
        message: message.into(),
    }
}

trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> CliResult<T>;
}

impl<T> Context<T> for saeti::Result<T> {
    fn context(self, what: impl FnOnce() -> String) -> CliResult<T> {
        self.map_err(|e: Error| CliError {
            code: if e.is_validation() { 2 } else { 1 },
            message: format!("{}: {e}", what()),
        })
    }
}

fn load(path: &Path) -> CliResult<TimeSeries> {
    load_series(path).context(|| format!("reading {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> CliResult {
    std::fs::write(path, text).map_err(|e| CliError {
        code: 1,
        message: format!("writing {}: {e}", path.display()),
    })
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| CliError {
            code: 1,
            message: format!("serializing: {e}"),
        })
}

pub fn snippets(a: &SnippetsArgs) -> CliResult {
    let ts = load(&a.input)?;
    let ell = a.ell.unwrap_or_else(|| default_inner_window(a.m));
    let sets = (0..ts.d())
        .map(|j| find_snippets(ts.coord(j), j, a.m, a.k, ell).context(|| format!("coordinate {}", ts.names()[j])))
        .collect::<CliResult<Vec<_>>>()?;
    write_text(&a.out, &to_json(&sets)?)?;
    println!("{:<16} {:>4} {:>8} {:>8}", "coordinate", "rank", "segment", "frac");
    for set in &sets {
        for (r, s) in set.items.iter().enumerate() {
            println!("{:<16} {:>4} {:>8} {:>8.4}", ts.names()[set.coord], r + 1, s.index, s.frac);
        }
    }
    Ok(())
}

fn losses_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".losses.csv");
    PathBuf::from(name)
}

fn losses_csv(trained: &Trained) -> String {
    let mut s = String::from("phase,epoch,train_loss,val_loss,val_accuracy\n");
    for h in trained.history() {
        let phase = serde_json::to_value(h.phase).ok();
        let phase = phase.as_ref().and_then(|v| v.as_str()).unwrap_or("");
        let acc = h.val_accuracy.map(|a| a.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{phase},{},{},{},{acc}", h.epoch, h.train_loss, h.val_loss);
    }
    s
}

pub fn train(a: &TrainArgs) -> CliResult {
    let ts = load(&a.input)?;
    let cfg = TrainConfig {
        ell: a.ell,
        latent: a.latent,
        seed: a.seed,
        batch_size: a.batch_size,
        max_epochs: a.max_epochs,
        patience: a.patience,
        mask_fraction: a.mask_fraction,
        lr: a.lr,
        stride: a.stride,
        ..TrainConfig::new(a.m, a.k)
    };
    let trained = train_models(&ts, &cfg).context(|| "training".into())?;
    save_bundle(&trained.bundle, &a.out).context(|| format!("writing {}", a.out.display()))?;
    let sidecar = losses_path(&a.out);
    write_text(&sidecar, &losses_csv(&trained))?;

    let rec = &trained.recognizer;
    let acc = rec
        .history
        .iter()
        .find(|h| h.epoch == rec.best_epoch)
        .and_then(|h| h.val_accuracy)
        .unwrap_or(f64::NAN);
    println!(
        "recognizer: best epoch {} of {}, val loss {:.6}, val accuracy {:.4}",
        rec.best_epoch,
        rec.history.len(),
        rec.best_val_loss,
        acc
    );
    let con = &trained.reconstructor;
    println!(
        "reconstructor: best epoch {} of {}, val masked MSE {:.6}",
        con.best_epoch,
        con.history.len(),
        con.best_val_loss
    );
    println!("bundle {} ({})", a.out.display(), sidecar.display());
    Ok(())
}

pub fn generate_gaps(a: &GapArgs) -> CliResult {
    let kind: ScenarioKind = a.scenario.parse().map_err(|e: Error| usage(e.to_string()))?;
    let ts = load(&a.input)?;
    let (gapped, mask) = match kind {
        ScenarioKind::Blackout => gen_blackout(&ts, a.gap_len.unwrap_or(10), a.seed),
        ScenarioKind::Mcar => gen_mcar(&ts, a.rate, a.block_len, a.seed),
        ScenarioKind::TsNbr => {
            if a.coord == 0 {
                return Err(usage("--coord is 1-based"));
            }
            let len = a.gap_len.unwrap_or_else(|| default_ts_nbr_gap(ts.n()));
            gen_ts_nbr(&ts, a.coord - 1, len, a.seed)
        }
    }
    .context(|| format!("{kind} scenario"))?;
    save_series(&gapped, &a.out).context(|| format!("writing {}", a.out.display()))?;
    let file = std::fs::File::create(&a.mask_out).map_err(|e| CliError {
        code: 1,
        message: format!("writing {}: {e}", a.mask_out.display()),
    })?;
    mask.write_csv(file).context(|| format!("writing {}", a.mask_out.display()))?;
    println!(
        "{kind}: removed {} cells, missing fraction {:.4}",
        mask.count(),
        gapped.missing_fraction()
    );
    Ok(())
}

pub fn impute(a: &ImputeArgs) -> CliResult {
    let ts = load(&a.input)?;
    let bundle = load_bundle(&a.bundle).context(|| format!("reading {}", a.bundle.display()))?;
    let (out, stats) = impute_with_stats(&ts, &bundle).context(|| "imputing".into())?;
    save_series(&out, &a.out).context(|| format!("writing {}", a.out.display()))?;
    println!(
        "imputed {} points in {} of {} windows",
        stats.imputed_points, stats.routed, stats.windows
    );
    if stats.clamped_inputs > 0 {
        println!("{} observed values outside the training range were clamped", stats.clamped_inputs);
    }
    Ok(())
}

#[derive(Serialize)]
struct Score {
    rmse: f64,
    rmse_per_coord: Vec<Option<f64>>,
}

#[derive(Serialize)]
struct Baselines {
    mean: Score,
    linear: Score,
}

#[derive(Serialize)]
struct Report {
    cells: usize,
    coordinates: Vec<String>,
    imputed: Score,
    #[serde(skip_serializing_if = "Option::is_none")]
    baselines: Option<Baselines>,
}

fn score(truth: &TimeSeries, pred: &TimeSeries, mask: &GapMask, label: &str) -> CliResult<Score> {
    Ok(Score {
        rmse: rmse(truth, pred, mask).context(|| format!("scoring {label}"))?,
        rmse_per_coord: rmse_per_coord(truth, pred, mask).context(|| format!("scoring {label}"))?,
    })
}

pub fn evaluate(a: &EvaluateArgs) -> CliResult {
    let truth = load(&a.truth)?;
    let imputed = load(&a.imputed)?;
    if truth.n() != imputed.n() || truth.d() != imputed.d() {
        return Err(usage(format!(
            "truth is {}x{} but imputed is {}x{}",
            truth.n(),
            truth.d(),
            imputed.n(),
            imputed.d()
        )));
    }
    let file = std::fs::File::open(&a.mask).map_err(|e| CliError {
        code: 1,
        message: format!("reading {}: {e}", a.mask.display()),
    })?;
    let mask = GapMask::read_csv(file, truth.n(), truth.d()).context(|| format!("reading {}", a.mask.display()))?;
    let imputed_score = score(&truth, &imputed, &mask, "imputed series")?;
    let baselines = if a.baselines {
        let mut gapped = truth.clone();
        for (i, j) in mask.cells() {
            gapped.remove(i, j);
        }
        let mean = baseline_mean(&gapped).context(|| "mean baseline".into())?;
        let linear = baseline_linear(&gapped).context(|| "linear baseline".into())?;
        Some(Baselines {
            mean: score(&truth, &mean, &mask, "mean baseline")?,
            linear: score(&truth, &linear, &mask, "linear baseline")?,
        })
    } else {
        None
    };
    let report = Report {
        cells: mask.count(),
        coordinates: truth.names().to_vec(),
        imputed: imputed_score,
        baselines,
    };
    write_text(&a.report, &to_json(&report)?)?;

    println!("{:<16} {:>12}", "method", "rmse");
    println!("{:<16} {:>12.6}", "imputed", report.imputed.rmse);
    if let Some(b) = &report.baselines {
        println!("{:<16} {:>12.6}", "mean", b.mean.rmse);
        println!("{:<16} {:>12.6}", "linear", b.linear.rmse);
    }
    Ok(())
}
