//! End-to-end experiment orchestration. Each stage reads its inputs from
//! and writes its artifacts to a single output directory, so any stage can
//! be rerun in isolation. Identical config and seed reproduce every
//! artifact byte for byte.
//!
//! Stage layout inside the output directory:
//!   faces.idx / digits.idx / mixed.idx / pairs.csv   (synth)
//!   model.dbns / train_log.csv                        (train)
//!   variance_{face,digit}.csv
//!   relative_activity_{face,digit}.csv
//!   analysis_summary.csv                              (analyze)
//!   metrics.csv / reconstruction_summary.csv
//!   montage_{variance,relative_activity}.pgm          (reconstruct)
//!   report.txt                                        (report)
//! plus config_effective.txt echoed by every stage.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{self, Aspect, ImageSet, PairIndex};
use crate::dbn::{self, crc32};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::rbm::{mix_seed, TrainConfig};
use crate::separation::{
    self, NodeStatistics, RelevanceSelection, StatKind,
};

/// Everything one experiment run depends on. Defaults are the desk-scale
/// reference pipeline; a flat key=value config file and CLI flags override
/// them (flags win).
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Hidden layer sizes; the visible size is height*width.
    pub hidden_sizes: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub cd_k: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub n_faces: usize,
    pub n_digits: usize,
    pub n_mixed: usize,
    pub height: usize,
    pub width: usize,
    pub var_threshold: f64,
    pub ra_threshold: f64,
    /// When set, node selections take the top fraction by score instead of
    /// applying the fixed thresholds.
    pub quantile: Option<f64>,
    pub out_dir: PathBuf,
    pub mnist_images: Option<PathBuf>,
    pub mnist_labels: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            hidden_sizes: vec![128, 64, 32],
            learning_rate: 0.05,
            epochs: 15,
            batch_size: 64,
            cd_k: 1,
            momentum: 0.5,
            weight_decay: 1e-4,
            n_faces: 2000,
            n_digits: 1000,
            n_mixed: 1000,
            height: 28,
            width: 28,
            var_threshold: 0.1,
            ra_threshold: 0.7,
            quantile: None,
            out_dir: PathBuf::from("out"),
            mnist_images: None,
            mnist_labels: None,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

fn parse_sizes(value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|s| parse::<usize>("layers", s.trim()))
        .collect()
}

impl PipelineConfig {
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "layers" => self.hidden_sizes = parse_sizes(value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "cd_k" => self.cd_k = parse(key, value)?,
            "momentum" => self.momentum = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "n_faces" => self.n_faces = parse(key, value)?,
            "n_digits" => self.n_digits = parse(key, value)?,
            "n_mixed" => self.n_mixed = parse(key, value)?,
            "height" => self.height = parse(key, value)?,
            "width" => self.width = parse(key, value)?,
            "var_threshold" => self.var_threshold = parse(key, value)?,
            "ra_threshold" => self.ra_threshold = parse(key, value)?,
            "quantile" => {
                self.quantile = if value.is_empty() || value == "none" {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "out_dir" => self.out_dir = PathBuf::from(value),
            "mnist_images" => self.mnist_images = Some(PathBuf::from(value)),
            "mnist_labels" => self.mnist_labels = Some(PathBuf::from(value)),
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Apply a flat key=value file; '#' starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value", lineno + 1))
            })?;
            self.apply_kv(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Canonical key=value rendering; also what the config hash covers.
    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed = {}", self.seed);
        let sizes: Vec<String> = self.hidden_sizes.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(s, "layers = {}", sizes.join(","));
        let _ = writeln!(s, "learning_rate = {}", self.learning_rate);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "cd_k = {}", self.cd_k);
        let _ = writeln!(s, "momentum = {}", self.momentum);
        let _ = writeln!(s, "weight_decay = {}", self.weight_decay);
        let _ = writeln!(s, "n_faces = {}", self.n_faces);
        let _ = writeln!(s, "n_digits = {}", self.n_digits);
        let _ = writeln!(s, "n_mixed = {}", self.n_mixed);
        let _ = writeln!(s, "height = {}", self.height);
        let _ = writeln!(s, "width = {}", self.width);
        let _ = writeln!(s, "var_threshold = {}", self.var_threshold);
        let _ = writeln!(s, "ra_threshold = {}", self.ra_threshold);
        match self.quantile {
            Some(q) => {
                let _ = writeln!(s, "quantile = {q}");
            }
            None => {
                let _ = writeln!(s, "quantile = none");
            }
        }
        if let Some(p) = &self.mnist_images {
            let _ = writeln!(s, "mnist_images = {}", p.display());
        }
        if let Some(p) = &self.mnist_labels {
            let _ = writeln!(s, "mnist_labels = {}", p.display());
        }
        s
    }

    pub fn config_hash(&self) -> u32 {
        crc32(self.to_kv_string().as_bytes())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            cd_k: self.cd_k,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            seed: self.seed,
        }
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.height * self.width];
        sizes.extend_from_slice(&self.hidden_sizes);
        sizes
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn echo_config(&self) -> Result<()> {
        fs::create_dir_all(&self.out_dir)?;
        fs::write(self.path("config_effective.txt"), self.to_kv_string())?;
        Ok(())
    }
}

fn load_set(cfg: &PipelineConfig, name: &str, aspect: Aspect) -> Result<ImageSet> {
    let mut set = data::load_idx(&cfg.path(name), None)?;
    set.aspects = vec![aspect; set.len()];
    if aspect == Aspect::Mixed {
        set.pair_index = Some(read_pairs_csv(&cfg.path("pairs.csv"))?);
        set.validate()?;
    }
    Ok(set)
}

fn read_pairs_csv(path: &Path) -> Result<Vec<PairIndex>> {
    let text = fs::read_to_string(path)?;
    let mut pairs = Vec::new();
    for line in text.lines().skip(1) {
        let mut fields = line.split(',');
        let _mixed: usize = parse("mixed_row", fields.next().unwrap_or(""))?;
        let face = parse("face_row", fields.next().unwrap_or(""))?;
        let digit = parse("digit_row", fields.next().unwrap_or(""))?;
        pairs.push(PairIndex { face, digit });
    }
    Ok(pairs)
}

/// Build and persist the three dataset parts plus the pairing manifest.
pub fn cmd_synth(cfg: &PipelineConfig) -> Result<()> {
    cfg.echo_config()?;
    let faces = data::synth_faces(cfg.n_faces, cfg.height, cfg.width, mix_seed(cfg.seed, 100))?;
    let digits = match &cfg.mnist_images {
        Some(path) => {
            let full = data::load_idx(path, cfg.mnist_labels.as_deref())?;
            if full.len() < cfg.n_digits {
                return Err(Error::Config(format!(
                    "requested {} digits but the IDX file holds {}",
                    cfg.n_digits,
                    full.len()
                )));
            }
            let rows: Vec<usize> = (0..cfg.n_digits).collect();
            let mut subset = ImageSet::new_uniform(
                full.images.select_rows(&rows),
                full.height,
                full.width,
                Aspect::Digit,
            )?;
            subset.labels = full.labels.map(|l| l[..cfg.n_digits].to_vec());
            subset
        }
        None => data::synth_digits(cfg.n_digits, cfg.height, cfg.width, mix_seed(cfg.seed, 101))?,
    };
    let mixed = data::corrupt(&faces, &digits, cfg.n_mixed, mix_seed(cfg.seed, 102))?;

    data::save_idx(&faces, &cfg.path("faces.idx"))?;
    data::save_idx(&digits, &cfg.path("digits.idx"))?;
    data::save_idx(&mixed, &cfg.path("mixed.idx"))?;

    let mut csv = String::from("mixed_row,face_row,digit_row\n");
    for (k, p) in mixed.pair_index.as_ref().unwrap().iter().enumerate() {
        let _ = writeln!(csv, "{k},{},{}", p.face, p.digit);
    }
    fs::write(cfg.path("pairs.csv"), csv)?;
    Ok(())
}

/// Greedy layer-wise training on the union of all three dataset parts.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<()> {
    cfg.echo_config()?;
    let faces = load_set(cfg, "faces.idx", Aspect::Face)?;
    let digits = load_set(cfg, "digits.idx", Aspect::Digit)?;
    let mixed = load_set(cfg, "mixed.idx", Aspect::Mixed)?;

    let mut all = Vec::new();
    all.extend_from_slice(faces.images.data());
    all.extend_from_slice(digits.images.data());
    all.extend_from_slice(mixed.images.data());
    let rows = faces.len() + digits.len() + mixed.len();
    let training = Matrix::new(rows, cfg.height * cfg.width, all)?;

    let (model, logs) = dbn::greedy_train(&training, &cfg.layer_sizes(), &cfg.train_config())?;
    dbn::save_model(&model, &cfg.path("model.dbns"))?;

    // wall time is not reproducible, so it goes to a side file and stays
    // out of the checksummed CSV
    let mut csv = String::from("layer,epoch,recon_error\n");
    let mut timings = String::from("layer epoch seconds\n");
    for (layer, log) in logs.iter().enumerate() {
        for (epoch, (err, secs)) in log
            .recon_errors
            .iter()
            .zip(&log.epoch_seconds)
            .enumerate()
        {
            let _ = writeln!(csv, "{layer},{epoch},{err}");
            let _ = writeln!(timings, "{layer} {epoch} {secs:.3}");
        }
    }
    fs::write(cfg.path("train_log.csv"), csv)?;
    fs::write(cfg.path("train_timings.txt"), timings)?;
    Ok(())
}

fn select(cfg: &PipelineConfig, stats: &NodeStatistics) -> Result<RelevanceSelection> {
    match cfg.quantile {
        Some(q) => separation::select_top_quantile(stats, q),
        None => {
            let threshold = match stats.kind {
                StatKind::Variance => cfg.var_threshold,
                StatKind::RelativeActivity => cfg.ra_threshold,
            };
            Ok(separation::select_by_threshold(stats, threshold))
        }
    }
}

/// Expected Jaccard index of two uniform random subsets of sizes a and b
/// drawn from n elements, using the hypergeometric mean intersection a*b/n.
pub fn chance_jaccard(a: usize, b: usize, n: usize) -> f64 {
    if n == 0 || a + b == 0 {
        return 0.0;
    }
    let inter = a as f64 * b as f64 / n as f64;
    inter / (a as f64 + b as f64 - inter)
}

/// Node statistics and selections for both methods, plus their agreement.
pub fn cmd_analyze(cfg: &PipelineConfig) -> Result<()> {
    cfg.echo_config()?;
    let model = dbn::load_model(&cfg.path("model.dbns"))?;
    let faces = load_set(cfg, "faces.idx", Aspect::Face)?;
    let digits = load_set(cfg, "digits.idx", Aspect::Digit)?;
    let mixed = load_set(cfg, "mixed.idx", Aspect::Mixed)?;

    let var_face = separation::variance_analysis(&model, &faces)?;
    let var_digit = separation::variance_analysis(&model, &digits)?;
    // relative activity against the paired digit isolates the face aspect,
    // and against the paired face isolates the digit aspect
    let ra_face = separation::mean_relative_activity(&model, &mixed, &digits)?;
    let ra_digit = separation::mean_relative_activity(&model, &mixed, &faces)?;

    let sel_var_face = select(cfg, &var_face)?;
    let sel_var_digit = select(cfg, &var_digit)?;
    let sel_ra_face = select(cfg, &ra_face)?;
    let sel_ra_digit = select(cfg, &ra_digit)?;

    separation::export_csv(&var_face, &sel_var_face, &cfg.path("variance_face.csv"))?;
    separation::export_csv(&var_digit, &sel_var_digit, &cfg.path("variance_digit.csv"))?;
    separation::export_csv(&ra_face, &sel_ra_face, &cfg.path("relative_activity_face.csv"))?;
    separation::export_csv(&ra_digit, &sel_ra_digit, &cfg.path("relative_activity_digit.csv"))?;

    let jaccard = sel_var_face.jaccard(&sel_ra_face);
    let chance = chance_jaccard(sel_var_face.len(), sel_ra_face.len(), model.n_top());
    let overlap_within_variance = sel_var_face
        .node_indices
        .iter()
        .filter(|i| sel_var_digit.node_indices.contains(i))
        .count();
    let mut csv = String::from(
        "n_top,var_face_nodes,var_digit_nodes,ra_face_nodes,ra_digit_nodes,\
         face_jaccard,face_jaccard_chance,var_face_digit_overlap\n",
    );
    let _ = writeln!(
        csv,
        "{},{},{},{},{},{jaccard},{chance},{overlap_within_variance}",
        model.n_top(),
        sel_var_face.len(),
        sel_var_digit.len(),
        sel_ra_face.len(),
        sel_ra_digit.len(),
    );
    fs::write(cfg.path("analysis_summary.csv"), csv)?;
    Ok(())
}

/// Rebuild a selection from an exported statistics CSV.
pub fn read_selection_csv(path: &Path) -> Result<RelevanceSelection> {
    let text = fs::read_to_string(path)?;
    let mut node_indices = Vec::new();
    let mut method = StatKind::Variance;
    let mut threshold = 0.0;
    let mut n_top = 0;
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Format(format!("bad selection CSV row {line:?}")));
        }
        let idx: usize = parse("node_index", fields[0])?;
        let selected: u8 = parse("selected", fields[2])?;
        if selected == 1 {
            node_indices.push(idx);
        }
        method = match fields[3] {
            "variance" => StatKind::Variance,
            "relative_activity" => StatKind::RelativeActivity,
            other => return Err(Error::Format(format!("unknown method {other:?}"))),
        };
        threshold = parse("threshold", fields[4])?;
        n_top = n_top.max(idx + 1);
    }
    Ok(RelevanceSelection {
        node_indices,
        method,
        threshold,
        n_top,
    })
}

struct MethodOutcome {
    name: &'static str,
    mean_plain: f64,
    mean_neutralized: f64,
    fraction_improved: f64,
}

/// Reconstruct every mixed image with and without inactivating the digit
/// nodes, score both against the paired clean face, and emit montages
/// mirroring the corrupted / plain / selective three-panel comparison.
pub fn cmd_reconstruct(cfg: &PipelineConfig) -> Result<()> {
    cfg.echo_config()?;
    let model = dbn::load_model(&cfg.path("model.dbns"))?;
    let faces = load_set(cfg, "faces.idx", Aspect::Face)?;
    let mixed = load_set(cfg, "mixed.idx", Aspect::Mixed)?;
    let pairs = mixed.pair_index.clone().unwrap();

    let nv = separation::neutral_values(&model, &faces)?;
    let plain = dbn::reconstruct(&model, &mixed.images)?;

    let methods = [
        ("variance", "variance_digit.csv", "montage_variance.pgm"),
        (
            "relative_activity",
            "relative_activity_digit.csv",
            "montage_relative_activity.pgm",
        ),
    ];

    let mut metrics = String::from("image_index,method,mse_plain,mse_neutralized,improved\n");
    let mut outcomes = Vec::new();
    for (name, sel_file, montage_file) in methods {
        let digit_nodes = read_selection_csv(&cfg.path(sel_file))?;
        let selective = separation::selective_reconstruct(&model, &mixed.images, &digit_nodes, &nv)?;

        let mut sum_plain = 0.0;
        let mut sum_neutral = 0.0;
        let mut improved = 0usize;
        for (k, p) in pairs.iter().enumerate() {
            let clean = faces.images.row(p.face);
            let mse_plain = plain.row(k).mean_squared_diff(&clean)?;
            let mse_neutral = selective.row(k).mean_squared_diff(&clean)?;
            sum_plain += mse_plain;
            sum_neutral += mse_neutral;
            let better = mse_neutral < mse_plain;
            improved += usize::from(better);
            let _ = writeln!(
                metrics,
                "{k},{name},{mse_plain},{mse_neutral},{}",
                u8::from(better)
            );
        }
        let n = pairs.len() as f64;
        outcomes.push(MethodOutcome {
            name,
            mean_plain: sum_plain / n,
            mean_neutralized: sum_neutral / n,
            fraction_improved: improved as f64 / n,
        });

        // three columns per sample: corrupted, plain, digit-nodes-inactive
        let samples = pairs.len().min(8);
        let mut tiles: Vec<&[f64]> = Vec::with_capacity(samples * 3);
        for k in 0..samples {
            tiles.push(mixed.images.row_slice(k));
            tiles.push(plain.row_slice(k));
            tiles.push(selective.row_slice(k));
        }
        data::montage(
            &tiles,
            samples,
            3,
            cfg.height,
            cfg.width,
            &cfg.path(montage_file),
        )?;
    }
    fs::write(cfg.path("metrics.csv"), metrics)?;

    let mut csv = String::from("method,mean_mse_plain,mean_mse_neutralized,fraction_improved\n");
    for o in &outcomes {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            o.name, o.mean_plain, o.mean_neutralized, o.fraction_improved
        );
        println!(
            "{}: mean MSE {:.6} -> {:.6} with digit nodes inactive ({:.1}% of images improved)",
            o.name,
            o.mean_plain,
            o.mean_neutralized,
            o.fraction_improved * 100.0
        );
    }
    fs::write(cfg.path("reconstruction_summary.csv"), csv)?;
    Ok(())
}

/// Summary of one full run, as written by `cmd_report`.
pub struct RunReport {
    pub text: String,
    pub all_checks_passed: bool,
}

fn csv_rows(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect())
}

/// Aggregate the stage CSVs into one human-readable summary and evaluate
/// the run's improvement and agreement checks.
pub fn cmd_report(cfg: &PipelineConfig) -> Result<RunReport> {
    cfg.echo_config()?;
    let mut text = String::new();
    let _ = writeln!(text, "config hash: {:#010x}", cfg.config_hash());
    let _ = writeln!(text, "seed: {}", cfg.seed);
    let _ = writeln!(text, "layers: {:?}", cfg.layer_sizes());
    let _ = writeln!(
        text,
        "dataset: {} faces, {} digits, {} mixed at {}x{}",
        cfg.n_faces, cfg.n_digits, cfg.n_mixed, cfg.height, cfg.width
    );

    let mut all_pass = true;
    let mut check = |text: &mut String, label: &str, pass: bool| {
        let _ = writeln!(text, "[{}] {label}", if pass { "PASS" } else { "FAIL" });
        all_pass &= pass;
    };

    for row in csv_rows(&cfg.path("train_log.csv"))? {
        if row.len() == 3 && row[1] == "0" {
            let _ = writeln!(text, "layer {} first-epoch recon error: {}", row[0], row[2]);
        }
    }

    for row in csv_rows(&cfg.path("reconstruction_summary.csv"))? {
        if row.len() != 4 {
            continue;
        }
        let plain: f64 = parse("mean_mse_plain", &row[1])?;
        let neutral: f64 = parse("mean_mse_neutralized", &row[2])?;
        let frac: f64 = parse("fraction_improved", &row[3])?;
        let _ = writeln!(
            text,
            "{}: mean MSE {plain} plain vs {neutral} neutralized, {frac} improved",
            row[0]
        );
        check(
            &mut text,
            &format!("{} method lowers mean MSE", row[0]),
            neutral < plain,
        );
        check(
            &mut text,
            &format!("{} method improves >= 60% of images", row[0]),
            frac >= 0.6,
        );
    }

    for row in csv_rows(&cfg.path("analysis_summary.csv"))? {
        if row.len() != 8 {
            continue;
        }
        let jaccard: f64 = parse("face_jaccard", &row[5])?;
        let chance: f64 = parse("face_jaccard_chance", &row[6])?;
        let _ = writeln!(
            text,
            "face-node agreement: Jaccard {jaccard} vs chance {chance}"
        );
        check(
            &mut text,
            "method agreement exceeds chance",
            jaccard > chance,
        );
    }

    let _ = writeln!(
        text,
        "overall: {}",
        if all_pass { "PASS" } else { "FAIL" }
    );
    fs::write(cfg.path("report.txt"), &text)?;
    print!("{text}");
    Ok(RunReport {
        text,
        all_checks_passed: all_pass,
    })
}

/// synth, train, analyze, reconstruct, report in sequence.
pub fn cmd_all(cfg: &PipelineConfig) -> Result<RunReport> {
    cmd_synth(cfg)?;
    cmd_train(cfg)?;
    cmd_analyze(cfg)?;
    cmd_reconstruct(cfg)?;
    cmd_report(cfg)
}
