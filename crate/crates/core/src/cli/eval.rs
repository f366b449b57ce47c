use std::io::Write;
use std::path::{Path, PathBuf};

use candle_core::Device;
use clap::Args;
use plotters::prelude::*;
use serde::{Deserialize, Serialize};

use super::{guard_output, load_settings, record_settings, set};
use crate::error::IoContext;
use crate::fid::{compute_stats, frechet_distance, weighted_fid, ExtractorConfig, ExtractorId, FidStats, FidWeights};
use crate::imagedata::{list_images, resize_and_crop, DomainTag, ImageBatch, DEFAULT_IMAGE_SIZE};
use crate::trainer::read_log;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FidSettings {
    pub generated: PathBuf,
    pub real: PathBuf,
    pub cartoon: Option<PathBuf>,
    /// Images are resized and center-cropped to this side length first.
    pub size: u32,
    pub batch_size: usize,
    pub weights: FidWeights,
    pub extractor: ExtractorConfig,
}

impl Default for FidSettings {
    fn default() -> Self {
        Self {
            generated: PathBuf::new(),
            real: PathBuf::new(),
            cartoon: None,
            size: DEFAULT_IMAGE_SIZE,
            batch_size: 16,
            weights: FidWeights::default(),
            extractor: ExtractorConfig::default(),
        }
    }
}

#[derive(Debug, Args)]
pub struct FidArgs {
    /// Translated images.
    #[arg(long)]
    pub generated: Option<PathBuf>,
    /// Target-domain (photo) references.
    #[arg(long)]
    pub real: Option<PathBuf>,
    /// Input-domain (cartoon) references; enables the weighted score.
    #[arg(long)]
    pub cartoon: Option<PathBuf>,
    #[arg(long)]
    pub size: Option<u32>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub w_target: Option<f64>,
    #[arg(long)]
    pub w_input: Option<f64>,
    #[arg(long, value_enum)]
    pub extractor: Option<ExtractorId>,
    /// Output dimension of the `test_linear` extractor.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub weights_url: Option<String>,
    #[arg(long)]
    pub weights_sha256: Option<String>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Directory for score.json, the statistics and fid.toml.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

impl FidArgs {
    pub fn resolve(&self) -> Result<FidSettings> {
        let mut s: FidSettings = load_settings(self.config.as_ref())?;
        set(&mut s.generated, self.generated.clone());
        set(&mut s.real, self.real.clone());
        set(&mut s.cartoon, self.cartoon.clone().map(Some));
        set(&mut s.size, self.size);
        set(&mut s.batch_size, self.batch_size);
        set(&mut s.weights.target, self.w_target);
        set(&mut s.weights.input, self.w_input);
        set(&mut s.extractor.kind, self.extractor);
        set(&mut s.extractor.dim, self.dim);
        set(&mut s.extractor.seed, self.seed);
        set(&mut s.extractor.weights_url, self.weights_url.clone());
        set(&mut s.extractor.weights_sha256, self.weights_sha256.clone().map(Some));
        set(&mut s.extractor.cache_dir, self.cache_dir.clone().map(Some));
        if s.generated.as_os_str().is_empty() || s.real.as_os_str().is_empty() {
            return Err(Error::Config("fid needs --generated and --real".into()));
        }
        if s.size == 0 || s.batch_size == 0 {
            return Err(Error::Config("--size and --batch-size must be positive".into()));
        }
        s.weights.validate()?;
        Ok(s)
    }
}

/// Decodes a directory into same-sized batches.
fn directory_batches(dir: &Path, size: u32, batch_size: usize) -> Result<impl Iterator<Item = Result<ImageBatch>>> {
    let files = list_images(dir)?;
    if files.is_empty() {
        return Err(Error::EmptyCorpus(format!("no images in {}", dir.display())));
    }
    let chunks: Vec<Vec<PathBuf>> = files.chunks(batch_size).map(<[PathBuf]>::to_vec).collect();
    Ok(chunks.into_iter().map(move |chunk| {
        let images = chunk
            .iter()
            .map(|p| {
                let img = image::open(p).map_err(|e| Error::Decode {
                    path: p.clone(),
                    reason: e.to_string(),
                })?;
                Ok(resize_and_crop(&img.to_rgb8(), size))
            })
            .collect::<Result<Vec<_>>>()?;
        ImageBatch::from_images(&images, DomainTag::Generated, &Device::Cpu)
    }))
}

#[derive(Debug, Serialize)]
struct ScoreFile {
    fid_vs_target: f64,
    fid_vs_input: Option<f64>,
    weighted: Option<f64>,
    weights: FidWeights,
    extractor: ExtractorId,
    n_generated: usize,
    n_real: usize,
    n_cartoon: Option<usize>,
}

pub(super) fn run_fid(args: FidArgs) -> Result<()> {
    let s = args.resolve()?;
    if let Some(out) = &args.out {
        guard_output(out, args.force)?;
    }
    let extractor = s.extractor.build()?;
    let stats = |dir: &Path| -> Result<FidStats> {
        compute_stats(directory_batches(dir, s.size, s.batch_size)?, extractor.as_ref())
            .map_err(|e| match e {
                Error::SampleSize(n) => Error::Config(format!("{} holds {n} image(s); FID needs at least 2", dir.display())),
                other => other,
            })
    };
    let gen = stats(&s.generated)?;
    let real = stats(&s.real)?;
    let cartoon = s.cartoon.as_deref().map(stats).transpose()?;
    let score = match &cartoon {
        Some(c) => {
            let w = weighted_fid(&gen, &real, c, s.weights)?;
            ScoreFile {
                fid_vs_target: w.vs_target,
                fid_vs_input: Some(w.vs_input),
                weighted: Some(w.score),
                weights: s.weights,
                extractor: extractor.id(),
                n_generated: gen.n,
                n_real: real.n,
                n_cartoon: Some(c.n),
            }
        }
        None => ScoreFile {
            fid_vs_target: frechet_distance(&gen, &real)?,
            fid_vs_input: None,
            weighted: None,
            weights: s.weights,
            extractor: extractor.id(),
            n_generated: gen.n,
            n_real: real.n,
            n_cartoon: None,
        },
    };
    record_settings(&s, args.out.as_ref().map(|o| o.join("fid.toml")).as_deref())?;
    println!("FID vs target: {:.4}", score.fid_vs_target);
    if let (Some(vi), Some(w)) = (score.fid_vs_input, score.weighted) {
        println!("FID vs input: {vi:.4}");
        println!(
            "weighted FID ({}/{}): {w:.4}",
            s.weights.target, s.weights.input
        );
    }
    if let Some(out) = &args.out {
        let id = extractor.id();
        gen.save(out, "generated", id)?;
        real.save(out, "real", id)?;
        if let Some(c) = &cartoon {
            c.save(out, "cartoon", id)?;
        }
        let path = out.join("score.json");
        std::fs::write(&path, serde_json::to_string_pretty(&score)? + "\n").at(&path)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotSettings {
    pub log: PathBuf,
    pub out: PathBuf,
    pub title: Option<String>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Training log (`train_log.ndjson`).
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Chart file (SVG); a `.csv` with the plotted values is written beside it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub title: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

/// `(epoch, weighted, vs_target, vs_input)` for every FID entry, 1-based epochs.
pub fn fid_points(log: &Path) -> Result<Vec<(u64, f64, f64, f64)>> {
    Ok(read_log(log)?
        .into_iter()
        .filter_map(|e| e.fid.map(|f| (e.epoch + 1, f.score, f.vs_target, f.vs_input)))
        .collect())
}

type Point = (u64, f64, f64, f64);

fn draw(points: &[Point], out: &Path, title: &str) -> Result<()> {
    let plot_err = |e: String| Error::Io {
        path: out.to_path_buf(),
        source: std::io::Error::other(e),
    };
    let x_lo = points.iter().map(|p| p.0).min().unwrap_or(0);
    let x_hi = points.iter().map(|p| p.0).max().unwrap_or(1).max(x_lo + 1);
    let ys = points.iter().flat_map(|p| [p.1, p.2, p.3]);
    let y_lo = ys.clone().fold(f64::INFINITY, f64::min);
    let y_hi = ys.fold(f64::NEG_INFINITY, f64::max);
    let pad = ((y_hi - y_lo) * 0.1).max(1e-3);

    let root = SVGBackend::new(out, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(e.to_string()))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(16)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x_lo..x_hi, (y_lo - pad)..(y_hi + pad))
        .map_err(|e| plot_err(e.to_string()))?;
    chart
        .configure_mesh()
        .x_desc("epoch")
        .y_desc("FID")
        .draw()
        .map_err(|e| plot_err(e.to_string()))?;
    let series: [(&str, RGBColor, fn(&Point) -> f64); 3] = [
        ("weighted", BLUE, |p| p.1),
        ("vs target", RED, |p| p.2),
        ("vs input", GREEN, |p| p.3),
    ];
    for (label, color, y) in series {
        let data: Vec<(u64, f64)> = points.iter().map(|p| (p.0, y(p))).collect();
        chart
            .draw_series(LineSeries::new(data.clone(), color.stroke_width(2)))
            .map_err(|e| plot_err(e.to_string()))?
            .label(label)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
        chart
            .draw_series(data.into_iter().map(|(x, y)| Circle::new((x, y), 3, color.filled())))
            .map_err(|e| plot_err(e.to_string()))?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| plot_err(e.to_string()))?;
    root.present().map_err(|e| plot_err(e.to_string()))
}

pub(super) fn run_plot(args: PlotArgs) -> Result<()> {
    let mut s: PlotSettings = load_settings(args.config.as_ref())?;
    set(&mut s.log, args.log.clone());
    set(&mut s.out, args.out.clone());
    set(&mut s.title, args.title.clone().map(Some));
    if s.log.as_os_str().is_empty() || s.out.as_os_str().is_empty() {
        return Err(Error::Config("plot-fid needs --log and --out".into()));
    }
    let csv = s.out.with_extension("csv");
    guard_output(&s.out, args.force)?;
    guard_output(&csv, args.force)?;
    let points = fid_points(&s.log)?;
    if points.is_empty() {
        return Err(Error::Config(format!("no FID entries in {}", s.log.display())));
    }
    if let Some(dir) = s.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).at(dir)?;
    }
    let mut text = String::from("epoch,fid_weighted,fid_vs_target,fid_vs_input\n");
    for (e, w, t, i) in &points {
        text.push_str(&format!("{e},{w},{t},{i}\n"));
    }
    let mut f = std::fs::File::create(&csv).at(&csv)?;
    f.write_all(text.as_bytes()).at(&csv)?;
    let title = s.title.clone().unwrap_or_else(|| "FID by epoch".into());
    draw(&points, &s.out, &title)?;
    record_settings(&s, Some(&s.out.with_extension("toml")))?;
    println!("plotted {} FID entries to {} ({})", points.len(), s.out.display(), csv.display());
    Ok(())
}
