use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pdna::service::{router, AppState};
use pdna_core::cost::{render_table, simulated_cost, telemetry_nucs, CostInputs};
use pdna_core::pool::{Pool, PoolConfig, ReferenceDictionary};
use pdna_core::pyramid::{container, LayerBitstream, LayerHeader};
use pdna_core::raster;
use pdna_core::retrieval::{
    build_pool, encode_image, theoretical_inputs, RetrievalConfig, RetrievalSession, SessionState,
};
use pdna_core::sim::{read_tsv, write_tsv, ErrorModel, SamplingParams, TelemetryRecord};
use pdna_core::synthetic::kodak_like;

#[derive(Parser)]
#[command(
    name = "pdna",
    version,
    about = "Progressive image storage on simulated DNA pools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split an image into resolution layers and write them as an HPX1 file.
    Encode {
        image: PathBuf,
        #[arg(long, default_value_t = 4)]
        levels: usize,
        #[arg(long)]
        out: PathBuf,
        /// Image id; defaults to the file stem.
        #[arg(long)]
        id: Option<String>,
    },
    /// Write a synthetic 768x512 test image.
    Synth {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a pool and reference dictionary from layer files.
    BuildPool {
        #[arg(required = true)]
        layers: Vec<PathBuf>,
        #[arg(long)]
        dict: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write cost-model inputs (oligo counts per layer) here.
        #[arg(long)]
        inputs: Option<PathBuf>,
        /// Nucleotides read per molecule in the written cost inputs.
        #[arg(long, default_value_t = 12160.0)]
        coverage_nt: f64,
    },
    /// Retrieve an image layer by layer.
    Retrieve {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        dict: PathBuf,
        #[arg(long)]
        image_id: String,
        /// Stop after this layer.
        #[arg(long)]
        max_layer: Option<usize>,
        /// Do not ask before each further layer.
        #[arg(long)]
        auto: bool,
        #[command(flatten)]
        sim: SimArgs,
        /// Write the read event log as TSV.
        #[arg(long)]
        telemetry: Option<PathBuf>,
        /// Write one PNG preview per layer into this directory.
        #[arg(long)]
        previews: Option<PathBuf>,
        /// Original image, for PSNR.
        #[arg(long)]
        original: Option<PathBuf>,
    },
    /// Print read-cost tables.
    Analyze {
        /// Cost-model inputs (JSON).
        #[arg(long)]
        inputs: PathBuf,
        /// Event log of a session; adds the simulated cost table.
        #[arg(long)]
        telemetry: Option<PathBuf>,
        #[arg(long)]
        csv: bool,
    },
    /// Serve retrieval sessions over HTTP.
    Serve {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        dict: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[command(flatten)]
        sim: SimArgs,
        /// Directory of `<image_id>.png` originals, for PSNR.
        #[arg(long)]
        originals: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct SimArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Accepted reads per molecule before a layer is decoded.
    #[arg(long, default_value_t = 10.0)]
    coverage: f64,
    /// Substitution, insertion and deletion rate, each.
    #[arg(long, default_value_t = 0.005)]
    error_rate: f64,
    /// Read budget per layer, as a multiple of its coverage quota.
    #[arg(long, default_value_t = 50.0)]
    budget: f64,
}

impl SimArgs {
    fn config(&self) -> Result<RetrievalConfig> {
        let p = self.error_rate;
        Ok(RetrievalConfig {
            params: SamplingParams {
                coverage_target: self.coverage,
                ..SamplingParams::default()
            },
            model: ErrorModel::new(p, p, p, self.seed.wrapping_add(1))?,
            seed: self.seed,
            budget_factor: self.budget,
            ..RetrievalConfig::default()
        })
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Encode {
            image,
            levels,
            out,
            id,
        } => encode(&image, levels, &out, id),
        Command::Synth { seed, out } => {
            raster::save_png(&kodak_like(seed), &out)?;
            Ok(())
        }
        Command::BuildPool {
            layers,
            dict,
            pool,
            seed,
            inputs,
            coverage_nt,
        } => build(&layers, &dict, &pool, seed, inputs.as_deref(), coverage_nt),
        Command::Retrieve {
            pool,
            dict,
            image_id,
            max_layer,
            auto,
            sim,
            telemetry,
            previews,
            original,
        } => retrieve(RetrieveArgs {
            pool,
            dict,
            image_id,
            max_layer,
            auto,
            sim,
            telemetry,
            previews,
            original,
        }),
        Command::Analyze {
            inputs,
            telemetry,
            csv,
        } => analyze(&inputs, telemetry.as_deref(), csv),
        Command::Serve {
            pool,
            dict,
            addr,
            sim,
            originals,
        } => serve(&pool, &dict, addr, &sim, originals.as_deref()),
    }
}

fn encode(image: &Path, levels: usize, out: &Path, id: Option<String>) -> Result<()> {
    let img = raster::load(image).with_context(|| format!("reading {}", image.display()))?;
    let id = match id {
        Some(id) => id,
        None => image
            .file_stem()
            .and_then(|s| s.to_str())
            .context("image path has no usable file stem; pass --id")?
            .to_string(),
    };
    let layers = encode_image(&id, &img, levels)?;
    fs::create_dir_all(out)?;
    let path = out.join(format!("{id}.hpx"));
    container::write_file(&path, &layers)?;
    for l in &layers {
        println!(
            "{id} L{} {}x{} {} bytes",
            l.layer_index,
            l.decoded_dims.0,
            l.decoded_dims.1,
            l.payload.len()
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn load_layers(paths: &[PathBuf]) -> Result<Vec<(String, Vec<LayerBitstream>)>> {
    let mut by_image: BTreeMap<String, Vec<LayerBitstream>> = BTreeMap::new();
    for p in paths {
        for l in container::read_file(p).with_context(|| format!("reading {}", p.display()))? {
            by_image.entry(l.image_id.clone()).or_default().push(l);
        }
    }
    for layers in by_image.values_mut() {
        layers.sort_by_key(|l| l.layer_index);
    }
    Ok(by_image.into_iter().collect())
}

fn image_pixels(layers: &[LayerBitstream]) -> Result<u64> {
    let h = LayerHeader::parse(&layers[0].payload)?;
    Ok((h.image_width * h.image_height) as u64)
}

fn build(
    layer_files: &[PathBuf],
    dict_path: &Path,
    pool_path: &Path,
    seed: u64,
    inputs_path: Option<&Path>,
    coverage_nt: f64,
) -> Result<()> {
    let images = load_layers(layer_files)?;
    let built = build_pool(
        &images,
        PoolConfig {
            seed,
            ..PoolConfig::default()
        },
    )?;
    built.pool.save(pool_path)?;
    built.dictionary.save(dict_path)?;
    for ((id, k), n) in built.pool.catalog() {
        println!("{id} L{k}: {n} molecules");
    }
    println!(
        "{} molecules, {} copies in total",
        built.pool.len(),
        built.pool.total_abundance()
    );
    if let Some(path) = inputs_path {
        let pixels = images
            .iter()
            .map(|(id, l)| Ok((id.clone(), image_pixels(l)?)))
            .collect::<Result<Vec<_>>>()?;
        let inputs = theoretical_inputs(&built.pool, &pixels, coverage_nt)?;
        fs::write(path, inputs.to_json())?;
    }
    Ok(())
}

struct RetrieveArgs {
    pool: PathBuf,
    dict: PathBuf,
    image_id: String,
    max_layer: Option<usize>,
    auto: bool,
    sim: SimArgs,
    telemetry: Option<PathBuf>,
    previews: Option<PathBuf>,
    original: Option<PathBuf>,
}

fn ask_advance(next: usize) -> Result<bool> {
    eprint!("retrieve layer {next}? [y/N] ");
    io::stderr().flush()?;
    let mut line = String::new();
    if io::stdin().lock().read_line(&mut line)? == 0 {
        return Ok(false);
    }
    Ok(matches!(line.trim(), "y" | "Y" | "yes"))
}

fn retrieve(a: RetrieveArgs) -> Result<()> {
    let pool = Pool::load(&a.pool).with_context(|| format!("reading {}", a.pool.display()))?;
    let dict = ReferenceDictionary::load(&a.dict)
        .with_context(|| format!("reading {}", a.dict.display()))?;
    let original = a.original.as_deref().map(raster::load).transpose()?;
    let mut session = RetrievalSession::open(&pool, &dict, &a.image_id, a.sim.config()?, original)?;
    let last = session.n_levels() - 1;
    let max_layer = a.max_layer.unwrap_or(last).min(last);
    if let Some(dir) = &a.previews {
        fs::create_dir_all(dir)?;
    }

    let mut shown = 0;
    let result = loop {
        if let Err(e) = session.advance() {
            break Err(e);
        }
        for e in &session.events()[shown..] {
            let psnr = e.psnr_db.map_or("-".to_string(), |p| {
                if p.is_finite() {
                    format!("{p:.2} dB")
                } else {
                    "lossless".to_string()
                }
            });
            println!(
                "L{}  {}x{}  cost {} nt  gain {:.2}  psnr {}",
                e.layer,
                e.preview.width(),
                e.preview.height(),
                e.cost_nt,
                e.gain_estimate,
                psnr
            );
            if let Some(dir) = &a.previews {
                raster::save_png(
                    &e.preview,
                    &dir.join(format!("{}_L{}.png", a.image_id, e.layer)),
                )?;
            }
        }
        shown = session.events().len();
        let k = session.decoded_layers().len() - 1;
        if session.state() == SessionState::Complete {
            break Ok(());
        }
        if k >= max_layer || !(a.auto || a.max_layer.is_some() || ask_advance(k + 1)?) {
            session.stop()?;
            break Ok(());
        }
    };

    if let Some(path) = &a.telemetry {
        let mut out = io::BufWriter::new(fs::File::create(path)?);
        write_tsv(&session.sequencer().telemetry().records(), &mut out)?;
    }
    let tel = session.sequencer().telemetry();
    let done = session.decoded_layers().len();
    println!(
        "{} reads, {} ejected, {} nt sequenced",
        tel.events.len(),
        tel.ejections(),
        session.cost_nt()
    );
    if done > 0 {
        let k = done - 1;
        let verb = if done == session.n_levels() {
            "complete"
        } else {
            "stopped"
        };
        println!(
            "{verb} after L{k}: G_pd({k}) = {:.2}",
            session.theoretical_gain(k)
        );
    }
    result.map_err(Into::into)
}

fn analyze(inputs: &Path, telemetry: Option<&Path>, csv: bool) -> Result<()> {
    let text =
        fs::read_to_string(inputs).with_context(|| format!("reading {}", inputs.display()))?;
    let inputs = CostInputs::from_json(&text)?;
    let mut reports = vec![inputs.report()];
    if let Some(path) = telemetry {
        let file = fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
        let records = read_tsv(BufReader::new(file))?;
        reports.push(simulated_cost(&records, &sessions_in(&inputs, &records)?)?);
    }
    for r in &reports {
        if csv {
            print!("{}", r.to_csv());
        } else {
            print!("{}", render_table(r));
        }
    }
    Ok(())
}

/// The images of `inputs` that the event log retrieved. Simulated costs need
/// every layer of each of them.
fn sessions_in(inputs: &CostInputs, records: &[TelemetryRecord]) -> Result<CostInputs> {
    let seen = telemetry_nucs(records);
    let images: Vec<_> = inputs
        .images
        .iter()
        .filter(|img| seen.keys().any(|t| t.image_id == img.id))
        .cloned()
        .collect();
    if images.is_empty() {
        bail!("the event log retrieved none of the images in the cost inputs");
    }
    for img in &images {
        let done = seen.keys().filter(|t| t.image_id == img.id).count();
        if done < img.layers.len() {
            bail!(
                "{} was retrieved up to L{} only; simulated costs need a complete session (retrieve --auto)",
                img.id,
                done.saturating_sub(1)
            );
        }
    }
    Ok(CostInputs::new(images)?)
}

fn load_originals(
    dir: &Path,
    dict: &ReferenceDictionary,
) -> Result<BTreeMap<String, pdna_core::pyramid::Image>> {
    let mut out = BTreeMap::new();
    for id in dict.images().keys() {
        let path = dir.join(format!("{id}.png"));
        if path.exists() {
            out.insert(id.clone(), raster::load(&path)?);
        }
    }
    Ok(out)
}

fn serve(
    pool: &Path,
    dict: &Path,
    addr: SocketAddr,
    sim: &SimArgs,
    originals: Option<&Path>,
) -> Result<()> {
    let pool = Pool::load(pool).with_context(|| format!("reading {}", pool.display()))?;
    let dict =
        ReferenceDictionary::load(dict).with_context(|| format!("reading {}", dict.display()))?;
    if pool.is_empty() {
        bail!("pool is empty");
    }
    let originals = match originals {
        Some(dir) => load_originals(dir, &dict)?,
        None => BTreeMap::new(),
    };
    let state = AppState::new(pool, dict, sim.config()?).with_originals(originals);
    let app = router(Arc::new(state));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app).await?;
        Ok(())
    })
}
