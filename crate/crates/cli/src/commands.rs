use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use splatplane::container::{
    decode_scene, encode_scene, load_checkpoint, save_checkpoint, Checkpoint, Container, EncodeSettings, SizeReport,
};
use splatplane::experiment::{run_arms, standard_arms, sweep_q_step, Q_STEP_GRID};
use splatplane::framecodec::{
    build_external_command, hm_gop_stanza, raw_frames, Backend, CodecSettings, ExternalJob, LayoutKind,
    POSITION_FRAME_SIDE,
};
use splatplane::planefield::ply::{read_ply, write_ply};
use splatplane::planefield::GaussianCloud;
use splatplane::trainer::{run_training, synthetic_scene, write_log, LossWeights, SurrogateTarget, TrainConfig};

use crate::args::{BackendArg, CodecArgs, Command, LayoutArg, SceneArgs, TrainArgs};

pub const HM_BIN_VAR: &str = "SPLATPLANE_HM_BIN";
pub const FFMPEG_BIN_VAR: &str = "SPLATPLANE_FFMPEG_BIN";

pub fn run(cli: crate::args::Cli) -> Result<()> {
    match cli.command {
        Command::Train(c) => train(&c.scene, &c.train, &c.output, c.log.as_deref()),
        Command::Encode(c) => encode(&c.checkpoint, &c.output, &c.codec),
        Command::Decode(c) => decode(&c.input, &c.output),
        Command::SweepQstep(c) => sweep(&c.scene, &c.train, &c.codec, &c.output),
        Command::Ablate(c) => ablate(&c.scene, &c.train, &c.codec, &c.output, c.plot.as_deref()),
        Command::Report(c) => report(&c.input, c.output.as_deref()),
    }
}

fn load_scene(scene: &SceneArgs) -> Result<GaussianCloud> {
    if scene.input == "synthetic" {
        return Ok(synthetic_scene(scene.points, scene.sh_degree, scene.seed)?);
    }
    let file = File::open(&scene.input).with_context(|| format!("opening {}", scene.input))?;
    read_ply(BufReader::new(file)).with_context(|| format!("reading {}", scene.input))
}

pub fn train_config(t: &TrainArgs, seed: u64) -> Result<TrainConfig> {
    let base = TrainConfig {
        resolution: t.resolution,
        ..TrainConfig::default()
    };
    let mut cfg = base.scaled(t.iterations, t.channels)?;
    if let Some(s) = t.entropy_start {
        cfg.entropy_start = s;
    }
    if let Some(s) = t.ci_iteration {
        cfg.ci_iteration = s;
    }
    cfg.plane_lr = t.plane_lr;
    cfg.decoder_lr = t.decoder_lr;
    cfg.weights = LossWeights {
        lambda_ent: t.lambda_ent,
        lambda_l1: t.lambda_l1,
    };
    cfg.q_step = t.q_step;
    cfg.use_channel_weights = !t.no_channel_weights;
    cfg.seed = seed;
    cfg.validate()?;
    Ok(cfg)
}

fn codec_settings(c: &CodecArgs) -> (CodecSettings, LayoutKind) {
    let (backend, var) = match c.backend {
        BackendArg::Builtin => (Backend::Builtin, None),
        BackendArg::ExternalHm => (Backend::ExternalHm, Some(HM_BIN_VAR)),
        BackendArg::ExternalX265 => (Backend::ExternalX265, Some(FFMPEG_BIN_VAR)),
    };
    let settings = CodecSettings {
        backend,
        qp: c.qp,
        lossless: c.lossless,
        framerate: c.framerate,
        program: var.and_then(|v| std::env::var(v).ok()),
        ..CodecSettings::default()
    };
    let layout = match c.layout {
        LayoutArg::PerSlice => LayoutKind::PerSlice,
        LayoutArg::Tiled => LayoutKind::Tiled,
    };
    (settings, layout)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn train(scene: &SceneArgs, t: &TrainArgs, output: &Path, log_path: Option<&Path>) -> Result<()> {
    let cloud = load_scene(scene)?;
    let cfg = train_config(t, scene.seed)?;
    let schedule = cfg.schedule.clone();
    let positions = cloud.positions.clone();
    let out = run_training(cfg, SurrogateTarget::new(cloud)?)?;
    let bytes = save_checkpoint(&Checkpoint {
        field: out.field,
        decoders: out.decoders,
        model: out.model,
        positions,
        schedule,
    })?;
    fs::write(output, bytes).with_context(|| format!("writing {}", output.display()))?;
    if let Some(p) = log_path {
        let mut w = create(p)?;
        write_log(&out.log, &mut w)?;
        w.flush()?;
    }
    if let Some(last) = out.log.last() {
        println!(
            "trained {} iterations: energy {:.6e}, entropy bits {:.1}, l1 {:.4e}",
            out.log.len(),
            last.energy,
            last.entropy_bits,
            last.l1
        );
    }
    Ok(())
}

fn print_sizes(sizes: &SizeReport) {
    println!("{:<16} {:>12}", "section", "bytes");
    for (name, bytes) in sizes.rows() {
        println!("{name:<16} {bytes:>12}");
    }
}

fn sibling(output: &Path, suffix: &str) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    output.with_file_name(name)
}

fn encode(checkpoint: &Path, output: &Path, codec: &CodecArgs) -> Result<()> {
    let bytes = fs::read(checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
    let cp = load_checkpoint(&bytes)?;
    let (settings, layout) = codec_settings(codec);
    let encoded = encode_scene(
        &cp.field,
        &cp.decoders,
        &cp.positions,
        &cp.model,
        &EncodeSettings {
            codec: settings.clone(),
            layout,
            schedule: cp.schedule.clone(),
        },
    )?;
    fs::write(output, &encoded.bytes).with_context(|| format!("writing {}", output.display()))?;
    print_sizes(&encoded.sizes);

    if settings.backend != Backend::Builtin {
        let big_endian = settings.backend == Backend::ExternalX265;
        let planes_raw = sibling(output, ".planes.yuv");
        let planes_bs = sibling(output, if big_endian { ".planes.mp4" } else { ".planes.bin" });
        fs::write(&planes_raw, raw_frames(&encoded.frames.frames, big_endian))?;
        let job = ExternalJob {
            input: planes_raw.display().to_string(),
            bitstream: planes_bs.display().to_string(),
            width: encoded.frames.width(),
            height: encoded.frames.height(),
            frames: encoded.frames.frames.len(),
        };
        println!("planes: {}", build_external_command(&job, &settings)?);
        println!("  input  {}", planes_raw.display());
        println!("  output {}", planes_bs.display());
        if settings.backend == Backend::ExternalHm {
            print!("{}", hm_gop_stanza(&settings));
        }
    }
    if settings.backend == Backend::ExternalX265 || settings.backend == Backend::ExternalHm {
        let pos_raw = sibling(output, ".positions.yuv");
        let pos_bs = sibling(output, ".positions.mp4");
        fs::write(&pos_raw, raw_frames(&encoded.positions.frames(), true))?;
        let x265 = CodecSettings {
            backend: Backend::ExternalX265,
            program: std::env::var(FFMPEG_BIN_VAR).ok(),
            ..settings
        };
        let job = ExternalJob {
            input: pos_raw.display().to_string(),
            bitstream: pos_bs.display().to_string(),
            width: POSITION_FRAME_SIDE,
            height: POSITION_FRAME_SIDE,
            frames: encoded.positions.frame_count(),
        };
        println!("positions: {}", build_external_command(&job, &x265)?);
        println!("  input  {}", pos_raw.display());
        println!("  output {}", pos_bs.display());
    }
    Ok(())
}

fn decode(input: &Path, output: &Path) -> Result<()> {
    let bytes = fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    let cloud = decode_scene(&bytes)?;
    let mut w = create(output)?;
    write_ply(&cloud, &mut w)?;
    w.flush()?;
    println!("decoded {} points to {}", cloud.len(), output.display());
    Ok(())
}

fn sweep(scene: &SceneArgs, t: &TrainArgs, codec: &CodecArgs, output: &Path) -> Result<()> {
    let cloud = load_scene(scene)?;
    let cfg = train_config(t, scene.seed)?;
    let (settings, layout) = codec_settings(codec);
    let rows = sweep_q_step(&cfg, &SurrogateTarget::new(cloud)?, &Q_STEP_GRID, &settings, layout)?;
    let mut w = create(output)?;
    writeln!(w, "# lambda_ent={:e}", cfg.weights.lambda_ent)?;
    writeln!(w, "q_step,lambda_ent,plane_bytes,attribute_psnr_db")?;
    for r in &rows {
        writeln!(w, "{},{:e},{},{:.4}", r.q_step, r.lambda_ent, r.rate.plane_bytes, r.rate.psnr_db)?;
    }
    w.flush()?;
    for r in &rows {
        println!("q_step {:>6}: {:>10} bytes, {:.2} dB", r.q_step, r.rate.plane_bytes, r.rate.psnr_db);
    }
    Ok(())
}

fn ablate(scene: &SceneArgs, t: &TrainArgs, codec: &CodecArgs, output: &Path, plot: Option<&Path>) -> Result<()> {
    let cloud = load_scene(scene)?;
    let cfg = train_config(t, scene.seed)?;
    let (settings, layout) = codec_settings(codec);
    let arms = standard_arms(cfg.weights.lambda_l1, cfg.weights.lambda_ent);
    let results = run_arms(&cfg, &SurrogateTarget::new(cloud)?, &arms, &settings, layout)?;
    let mut w = create(output)?;
    writeln!(w, "arm,lambda_l1,lambda_ent,channel_weights,iterations,plane_bytes,attribute_psnr_db")?;
    for r in &results {
        writeln!(
            w,
            "{},{:e},{:e},{},{},{},{:.4}",
            r.arm.name,
            r.arm.weights.lambda_l1,
            r.arm.weights.lambda_ent,
            r.arm.channel_weights,
            cfg.iterations,
            r.rate.plane_bytes,
            r.rate.psnr_db
        )?;
    }
    w.flush()?;
    if let Some(p) = plot {
        let mut w = create(p)?;
        writeln!(w, "# arm log2_plane_bytes attribute_psnr_db")?;
        for r in &results {
            writeln!(w, "{} {:.6} {:.4}", r.arm.name, (r.rate.plane_bytes as f64).log2(), r.rate.psnr_db)?;
        }
        w.flush()?;
    }
    for r in &results {
        println!("{:<10} {:>10} bytes  {:.2} dB", r.arm.name, r.rate.plane_bytes, r.rate.psnr_db);
    }
    Ok(())
}

fn report(input: &Path, output: Option<&Path>) -> Result<()> {
    let bytes = fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    let container = Container::parse(&bytes)?;
    let (_, sizes) = container.to_bytes()?;
    let h = &container.header;
    println!(
        "{} points, {}x{} planes with {} channels, backend {}, QP {}",
        h.point_count,
        h.resolution,
        h.resolution,
        h.channels,
        h.backend.name(),
        h.qp
    );
    print_sizes(&sizes);
    if let Some(p) = output {
        let mut w = create(p)?;
        writeln!(w, "section,bytes")?;
        for (name, b) in sizes.rows() {
            writeln!(w, "{name},{b}")?;
        }
        w.flush()?;
    }
    Ok(())
}
