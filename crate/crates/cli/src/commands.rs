use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use snn_unwrap::encoding::{encode_scene, write_spike_csv};
use snn_unwrap::energy::{efficiency_report, ComplexityReport, EnergyLedger, GpuBaseline, TimingSource};
use snn_unwrap::network::{build_network, decode_topology, encode_topology, infer, NetworkTopology};
use snn_unwrap::plasticity::{train_with, TrainingScene};
use snn_unwrap::raster::{
    detect_residues, encode_raster, evaluate, itoh_wrap_counts, synthesize_scene, write_pgm, AnyRaster, CoherenceRaster,
    IntegrationOrder, PhaseKind, PhaseRaster, SceneSpec, WrapCountRaster,
};

use crate::config::{Engine, RunConfig};
use crate::CliError;

pub const SCHEMA_VERSION: &str = "1";

pub struct Context {
    pub out: PathBuf,
}

/// Outputs are assembled in memory and only written once a command has
/// succeeded, so a failing command leaves nothing behind.
#[derive(Default)]
struct Outputs(Vec<(String, Vec<u8>)>);

impl Outputs {
    fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.0.push((name.into(), bytes));
    }

    fn json(&mut self, name: &str, v: &impl Serialize) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(v).map_err(|e| CliError::Domain(e.to_string()))?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    fn raster(&mut self, name: &str, r: AnyRaster) -> Result<(), CliError> {
        let bytes = encode_raster(&r, r.default_dtype()).map_err(snn_unwrap::Error::from)?;
        self.add(name, bytes);
        Ok(())
    }

    fn pgm(&mut self, name: &str, r: &AnyRaster) -> Result<(), CliError> {
        let mut bytes = Vec::new();
        write_pgm(r, &mut bytes)?;
        self.add(name, bytes);
        Ok(())
    }

    fn write(self, dir: &Path) -> Result<(), CliError> {
        for (name, bytes) in self.0 {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(&path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }
}

fn run_dir(ctx: &Context, command: &str, cfg: &RunConfig, args: Value) -> Result<PathBuf, CliError> {
    let canonical = serde_json::to_vec(&json!({ "command": command, "config": cfg, "args": args }))
        .map_err(|e| CliError::Config(e.to_string()))?;
    let hash: String = Sha256::digest(&canonical).iter().take(6).map(|b| format!("{b:02x}")).collect();
    Ok(ctx.out.join(format!("{command}-{hash}")))
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn read_any(path: &Path) -> Result<AnyRaster, CliError> {
    snn_unwrap::raster::read_raster(path).map_err(|e| match e {
        snn_unwrap::Error::Io(e) => io_err(path, e),
        other => io_err(path, other),
    })
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    dir: String,
    spec: SceneSpec,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    schema_version: String,
    seed: u64,
    scenes: Vec<ManifestEntry>,
}

pub fn gen(ctx: &Context, cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let s = &cfg.scene;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Outputs::default();
    let mut entries = Vec::new();
    for i in 0..s.count {
        let ramp_slope = match s.slope_max {
            Some(max) => rng.random_range(s.ramp_slope..max),
            None => s.ramp_slope,
        };
        let spec = SceneSpec {
            width: s.width,
            height: s.height,
            shape: s.shape.into(),
            amplitude: s.amplitude,
            ramp_slope,
            coherence_profile: s.coherence_profile.into(),
            coherence_level: s.coherence_level,
            rng_seed: rng.random(),
        };
        let scene = synthesize_scene(&spec)?;
        let dir = format!("scene_{i:03}");
        let wrapped = AnyRaster::from(scene.wrapped);
        out.pgm(&format!("{dir}/wrapped.pgm"), &wrapped)?;
        out.raster(&format!("{dir}/wrapped.snur"), wrapped)?;
        out.raster(&format!("{dir}/absolute.snur"), scene.absolute.into())?;
        out.raster(&format!("{dir}/coherence.snur"), scene.coherence.into())?;
        out.raster(&format!("{dir}/k_truth.snur"), scene.truth_k.into())?;
        entries.push(ManifestEntry { dir, spec });
    }
    out.json("manifest.json", &Manifest { schema_version: SCHEMA_VERSION.into(), seed: cfg.seed, scenes: entries })?;
    let dir = run_dir(ctx, "gen", cfg, json!({}))?;
    out.write(&dir)?;
    Ok(dir)
}

struct LoadedScene {
    wrapped: PhaseRaster,
    coherence: CoherenceRaster,
    truth: Option<WrapCountRaster>,
}

/// A scene directory, or a `gen` run directory whose first scene is used.
fn resolve_scene_dir(path: &Path) -> PathBuf {
    if !path.join("wrapped.snur").exists() && path.join("scene_000").is_dir() {
        path.join("scene_000")
    } else {
        path.to_path_buf()
    }
}

fn load_scene(path: &Path) -> Result<LoadedScene, CliError> {
    let dir = resolve_scene_dir(path);
    let wrapped = read_any(&dir.join("wrapped.snur"))?
        .into_phase()
        .filter(|p| p.kind() == PhaseKind::Wrapped)
        .ok_or_else(|| CliError::Domain(format!("{}: not a wrapped phase raster", dir.join("wrapped.snur").display())))?;
    let coherence = read_any(&dir.join("coherence.snur"))?
        .into_coherence()
        .ok_or_else(|| CliError::Domain(format!("{}: not a coherence raster", dir.join("coherence.snur").display())))?;
    let truth_path = dir.join("k_truth.snur");
    let truth = if truth_path.exists() {
        Some(
            read_any(&truth_path)?
                .into_wrap_count()
                .ok_or_else(|| CliError::Domain(format!("{}: not a wrap-count raster", truth_path.display())))?,
        )
    } else {
        None
    };
    Ok(LoadedScene { wrapped, coherence, truth })
}

pub fn encode(ctx: &Context, cfg: &RunConfig, scene: &Path) -> Result<PathBuf, CliError> {
    let s = load_scene(scene)?;
    let enc = encode_scene(&s.wrapped, &s.coherence, &cfg.network.encoding)?;
    let mut out = Outputs::default();
    let mut csv = Vec::new();
    write_spike_csv(&enc.channels, &mut csv)?;
    out.add("spikes.csv", csv);
    let per_map: Vec<usize> =
        (0..enc.map_count()).map(|m| enc.channels[enc.map_range(m)].iter().map(|t| t.len()).sum()).collect();
    out.json(
        "encode.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "width": enc.dims.width,
            "height": enc.dims.height,
            "t_sim": enc.t_sim,
            "channels": enc.channels.len(),
            "total_spikes": enc.total_spikes(),
            "spikes_per_map": per_map,
            "population_spikes": enc.population_spikes(),
        }),
    )?;
    let dir = run_dir(ctx, "encode", cfg, json!({ "scene": scene }))?;
    out.write(&dir)?;
    Ok(dir)
}

fn load_dataset(path: &Path) -> Result<Vec<TrainingScene>, CliError> {
    let manifest_path = if path.is_dir() { path.join("manifest.json") } else { path.to_path_buf() };
    let text = fs::read_to_string(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| CliError::Domain(format!("{}: {e}", manifest_path.display())))?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    manifest
        .scenes
        .iter()
        .map(|entry| {
            let s = load_scene(&root.join(&entry.dir))?;
            let truth = s
                .truth
                .ok_or_else(|| CliError::Domain(format!("invalid dataset: scene {} has no k_truth.snur", entry.dir)))?;
            Ok(TrainingScene { wrapped: s.wrapped, coherence: s.coherence, truth })
        })
        .collect()
}

fn read_checkpoint(path: &Path) -> Result<NetworkTopology, CliError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    decode_topology(&bytes).map_err(|e| io_err(path, e))
}

pub fn train(ctx: &Context, cfg: &RunConfig, dataset: &Path, resume: Option<&Path>) -> Result<PathBuf, CliError> {
    let data = load_dataset(dataset)?;
    let first = data.first().ok_or_else(|| CliError::Domain("invalid dataset: no scenes".into()))?;
    let top = match resume {
        Some(p) => read_checkpoint(p)?,
        None => build_network(first.wrapped.width(), first.wrapped.height(), &cfg.network, cfg.seed)?,
    };
    if let Some((i, s)) = data.iter().enumerate().find(|(_, s)| s.wrapped.dims() != top.dims) {
        return Err(CliError::Domain(format!(
            "invalid dataset: scene {i} is {}x{} but the network is {}x{}",
            s.wrapped.width(),
            s.wrapped.height(),
            top.dims.width,
            top.dims.height
        )));
    }
    let dir = run_dir(ctx, "train", cfg, json!({ "dataset": dataset, "resume": resume }))?;
    fs::create_dir_all(&dir)?;
    let checkpoint = dir.join("checkpoint.snut");
    let save = |t: &NetworkTopology| -> snn_unwrap::Result<()> {
        let tmp = dir.join("checkpoint.snut.tmp");
        fs::write(&tmp, encode_topology(t)?)?;
        fs::rename(&tmp, &checkpoint)?;
        Ok(())
    };
    save(&top)?;
    let (trained, trace) = train_with(&data, &top, &cfg.learn, |t, _| save(t))?;
    save(&trained)?;
    let mut csv = Vec::new();
    trace.write_csv(&mut csv)?;
    fs::write(dir.join("trace.csv"), csv)?;
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "scenes": data.len(),
        "start_epoch": top.trained_epochs,
        "trained_epochs": trained.trained_epochs,
        "topology_hash": trained.hash()?,
        "final": trace.epochs.last(),
    });
    fs::write(dir.join("train.json"), serde_json::to_vec_pretty(&summary).map_err(|e| CliError::Domain(e.to_string()))?)?;
    Ok(dir)
}

/// Itoh wrap counts seeded at the origin, with the wall time of the attempt.
fn itoh(wrapped: &PhaseRaster) -> (Result<WrapCountRaster, CliError>, f64) {
    let t0 = Instant::now();
    let result = (|| {
        let residues = detect_residues(wrapped)?;
        if !residues.is_empty() {
            return Err(CliError::Domain(format!(
                "itoh engine needs a residue-free scene, found {} residue(s)",
                residues.len()
            )));
        }
        Ok(itoh_wrap_counts(wrapped, (0, 0), IntegrationOrder::RowThenColumn)?)
    })();
    (result, t0.elapsed().as_secs_f64())
}

pub fn unwrap(ctx: &Context, cfg: &RunConfig, scene: &Path, network: Option<&Path>) -> Result<PathBuf, CliError> {
    let s = load_scene(scene)?;
    let mut out = Outputs::default();
    let k = match cfg.engine {
        Engine::Itoh => itoh(&s.wrapped).0?,
        Engine::Snn => {
            let top = match network {
                Some(p) => read_checkpoint(p)?,
                None => build_network(s.wrapped.width(), s.wrapped.height(), &cfg.network, cfg.seed)?,
            };
            let r = infer(&s.wrapped, &s.coherence, &top, cfg.mode.into())?;
            let mut jsonl = Vec::new();
            r.trace.write_jsonl(&mut jsonl)?;
            out.add("trace.jsonl", jsonl);

            let (t_process, timing) = match cfg.gpu.t_process {
                Some(t) => (t, TimingSource::UserSupplied),
                None => (itoh(&s.wrapped).1, TimingSource::HostMeasured),
            };
            let gpu = GpuBaseline::new(cfg.gpu.p_gpu, t_process, timing)?;
            let ledger = EnergyLedger::from_record(&r.record);
            let synapses = top.enc_proc.len() + top.proc_dec.len() + top.lateral.len();
            let complexity = ComplexityReport::from_record(top.dims.width, top.dims.height, &r.record, synapses);
            let report = efficiency_report(ledger.joules(&cfg.hardware), snn_unwrap::energy::gpu_energy(&gpu), complexity);
            let mut energy = serde_json::to_value(&report).map_err(|e| CliError::Domain(e.to_string()))?;
            energy["ledger"] = json!(ledger);
            energy["hardware"] = json!(cfg.hardware);
            energy["gpu"] = json!(gpu);
            out.json("energy.json", &energy)?;
            r.k
        }
    };
    if let Some(truth) = &s.truth {
        out.json("metrics.json", &evaluate(&k, truth, &s.coherence, cfg.eval.mask_threshold)?)?;
    }
    let k_any = AnyRaster::from(k.clone());
    out.pgm("k.pgm", &k_any)?;
    out.raster("k.snur", k_any)?;
    out.raster("absolute.snur", s.wrapped.reconstruct(&k)?.into())?;
    let dir = run_dir(ctx, "unwrap", cfg, json!({ "scene": scene, "network": network }))?;
    out.write(&dir)?;
    Ok(dir)
}

pub fn eval(ctx: &Context, cfg: &RunConfig, scene: &Path, pred: &Path) -> Result<PathBuf, CliError> {
    let s = load_scene(scene)?;
    let truth = s.truth.ok_or_else(|| io_err(&resolve_scene_dir(scene).join("k_truth.snur"), "missing"))?;
    let k = read_any(pred)?
        .into_wrap_count()
        .ok_or_else(|| CliError::Domain(format!("{}: not a wrap-count raster", pred.display())))?;
    let mut out = Outputs::default();
    out.json("metrics.json", &evaluate(&k, &truth, &s.coherence, cfg.eval.mask_threshold)?)?;
    let dir = run_dir(ctx, "eval", cfg, json!({ "scene": scene, "pred": pred }))?;
    out.write(&dir)?;
    Ok(dir)
}

/// `path = value` lines, one per JSON leaf, numbers printed exactly as in the JSON.
fn flatten(prefix: &str, v: &Value, lines: &mut Vec<String>) {
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, lines);
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), v, lines);
            }
        }
        leaf => lines.push(format!("{prefix} = {leaf}")),
    }
}

pub fn report(ctx: &Context, cfg: &RunConfig, run: &Path) -> Result<PathBuf, CliError> {
    let wanted = ["metrics.json", "energy.json"];
    let missing: Vec<String> =
        wanted.iter().map(|n| run.join(n)).filter(|p| !p.is_file()).map(|p| p.display().to_string()).collect();
    if !missing.is_empty() {
        return Err(CliError::Io(format!("missing artifacts: {}", missing.join(", "))));
    }
    let read = |name: &str| -> Result<Value, CliError> {
        let path = run.join(name);
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        serde_json::from_str(&text).map_err(|e| io_err(&path, e))
    };
    let metrics = read("metrics.json")?;
    let mut energy = read("energy.json")?;
    let complexity = energy.as_object_mut().and_then(|m| m.remove("complexity")).unwrap_or(Value::Null);
    let merged = json!({
        "schema_version": SCHEMA_VERSION,
        "source_run": run,
        "metrics": metrics,
        "complexity": complexity,
        "energy": energy,
    });
    let mut lines = Vec::new();
    flatten("", &merged, &mut lines);
    let mut out = Outputs::default();
    out.json("report.json", &merged)?;
    out.add("report.txt", (lines.join("\n") + "\n").into_bytes());
    let dir = run_dir(ctx, "report", cfg, json!({ "run": run }))?;
    out.write(&dir)?;
    Ok(dir)
}
