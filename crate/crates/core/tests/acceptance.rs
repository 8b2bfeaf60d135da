//! Acceptance suite. Each criterion prints one PASS or FAIL line; the process
//! exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use splatplane::container::{
    attribute_error_bounds, bound_violation, decode_scene, encode_scene, plane_error_bound, prepare_positions,
    reference_cloud, stored_decoders, EncodeSettings,
};
use splatplane::experiment::{run_arms, standard_arms, sweep_q_step, Q_STEP_GRID};
use splatplane::framecodec::{
    build_external_command, code_positions, decode_frames_builtin, decode_positions, encode_frames_builtin,
    hm_gop_stanza, pack_planes, Backend, CodecSettings, ExternalJob, LayoutKind, PositionPack,
};
use splatplane::geometry::{contract, morton_order, Point3, QuantizedPosition};
use splatplane::planefield::{Attribute, Decoders, MlpDecoder, TriPlaneField};
use splatplane::rdloss::{channel_weights, ChannelImportance, EntropyModel};
use splatplane::trainer::{
    loss_and_gradient, synthetic_scene, LossWeights, ProgressiveSchedule, SurrogateTarget, TrainConfig, Trainer,
};
use splatplane::transform::{dct_block, idct_block, BlockSpec};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_decoders(channels: usize, hidden: usize, sh: usize, rng: &mut ChaCha8Rng) -> Decoders {
    Attribute::ALL.map(|a| MlpDecoder::random(channels, hidden, a.width(sh), rng))
}

/// Fourth-order central difference.
fn central_difference(x: f64, f: impl Fn(f64) -> f64) -> f64 {
    let h = 1e-5 * (1.0 + x.abs());
    (8.0 * (f(x + h) - f(x - h)) - (f(x + 2.0 * h) - f(x - 2.0 * h))) / (12.0 * h)
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cloud = synthetic_scene(60, 1, 3).map_err(|e| e.to_string())?;
    let target = SurrogateTarget::new(cloud).map_err(|e| e.to_string())?;
    let field = TriPlaneField::random(16, 2, 1, &mut rng).map_err(|e| e.to_string())?;
    let decoders = random_decoders(2, 8, 1, &mut rng);
    let mut model = EntropyModel::for_field(256.0, BlockSpec::default(), &field).map_err(|e| e.to_string())?;
    model.fit(&field);
    let importance = ChannelImportance::from_scores(vec![vec![1.0, 0.4]; 4], 1e3);

    let configs = [
        ("energy", LossWeights::default(), false),
        ("energy+l1", LossWeights { lambda_ent: 0.0, lambda_l1: 1e-3 }, false),
        ("energy+entropy", LossWeights { lambda_ent: 1e-4, lambda_l1: 0.0 }, true),
    ];
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for (name, weights, entropy_on) in configs {
        let eval = |f: &TriPlaneField, d: &Decoders| {
            loss_and_gradient(f, d, &target, weights, &model, &importance, entropy_on, false)
                .unwrap()
                .0
                .total
        };
        let grad = loss_and_gradient(&field, &decoders, &target, weights, &model, &importance, entropy_on, true)
            .map_err(|e| e.to_string())?
            .1
            .unwrap();
        let scale = grad
            .groups
            .iter()
            .flat_map(|g| g.planes.iter().flatten().copied().chain(g.decoder.parameters()))
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let mut compare = |analytic: f64, numeric: f64, what: String| -> Result<(), String> {
            let denom = analytic.abs().max(numeric.abs()).max(1e-6 * scale);
            let rel = (analytic - numeric).abs() / denom;
            worst = worst.max(rel);
            checked += 1;
            ensure(rel < 1e-4, || format!("{name}: {what} analytic {analytic:e} numeric {numeric:e} rel {rel:e}"))
        };
        for g in 0..4 {
            for p in 0..3 {
                let n = field.groups[g].planes[p].values().len();
                for k in 0..12 {
                    let i = (k * 47 + g * 13 + p * 5) % n;
                    let x = field.groups[g].planes[p].values()[i];
                    let numeric = central_difference(x, |v| {
                        let mut f = field.clone();
                        f.groups[g].planes[p].values_mut()[i] = v;
                        eval(&f, &decoders)
                    });
                    compare(grad.groups[g].planes[p][i], numeric, format!("plane g{g} p{p} texel {i}"))?;
                }
            }
            let count = decoders[g].parameter_count();
            let analytic: Vec<f64> = grad.groups[g].decoder.parameters().collect();
            for k in 0..20 {
                let i = (k * 131 + g * 7) % count;
                let x = decoders[g].parameters().nth(i).unwrap();
                let numeric = central_difference(x, |v| {
                    let mut d = decoders.clone();
                    *d[g].parameters_mut().nth(i).unwrap() = v;
                    eval(&field, &d)
                });
                compare(analytic[i], numeric, format!("decoder g{g} param {i}"))?;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, || format!("took {secs:.1}s"))?;
    Ok(format!("{checked} partials, worst relative error {worst:.2e}, {secs:.1}s"))
}

fn dct_round_trip() -> Outcome {
    let spec = BlockSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_err, mut worst_parseval) = (0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let block: Vec<f64> = (0..16).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let coeffs = dct_block(&block, spec);
        let back = idct_block(&coeffs, spec);
        for (a, b) in block.iter().zip(&back) {
            worst_err = worst_err.max((a - b).abs());
        }
        let e_in: f64 = block.iter().map(|v| v * v).sum();
        let e_out: f64 = coeffs.iter().map(|v| v * v).sum();
        worst_parseval = worst_parseval.max((e_in - e_out).abs() / e_in);
    }
    ensure(worst_err < 1e-9, || format!("round-trip error {worst_err:e}"))?;
    ensure(worst_parseval < 1e-9, || format!("Parseval error {worst_parseval:e}"))?;
    Ok(format!("max abs error {worst_err:.1e}, Parseval {worst_parseval:.1e}"))
}

fn masking() -> Outcome {
    let cloud = synthetic_scene(200, 0, 9).map_err(|e| e.to_string())?;
    let target = SurrogateTarget::new(cloud).map_err(|e| e.to_string())?;
    let schedule = ProgressiveSchedule::new(vec![0, 250, 500, 750], vec![2, 4, 6, 8]).map_err(|e| e.to_string())?;
    let config = TrainConfig {
        iterations: 1000,
        resolution: 16,
        channels: 8,
        hidden: 16,
        entropy_start: 600,
        ci_iteration: 600,
        weights: LossWeights { lambda_ent: 1e-6, lambda_l1: 1e-6 },
        schedule: schedule.clone(),
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(config, target).map_err(|e| e.to_string())?;
    let mut frozen_checks = 0usize;
    for it in 0..1000 {
        let active = schedule.active_channels(it);
        let before = trainer.field().clone();
        trainer.step(it).map_err(|e| e.to_string())?;
        for (gb, ga) in before.groups.iter().zip(&trainer.field().groups) {
            for (pb, pa) in gb.planes.iter().zip(&ga.planes) {
                for c in 0..8 {
                    let same = pb.channel(c).iter().zip(pa.channel(c)).all(|(a, b)| a.to_bits() == b.to_bits());
                    if c >= active {
                        ensure(same, || format!("inactive channel {c} changed at iteration {it}"))?;
                        frozen_checks += 1;
                    } else if it > 0 {
                        ensure(!same, || format!("active channel {c} did not move at iteration {it}"))?;
                    }
                }
            }
        }
    }
    Ok(format!("{frozen_checks} inactive slice-steps bitwise unchanged over 1000 iterations"))
}

fn contraction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let c = |x: f64, y: f64, z: f64| contract(Point3::new(x, y, z)).unwrap().point();
    for _ in 0..100_000 {
        let p = loop {
            let p = Point3::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0));
            if p.x * p.x + p.y * p.y + p.z * p.z <= 1.0 {
                break p;
            }
        };
        let q = c(p.x, p.y, p.z);
        ensure(q == p, || format!("{p:?} moved to {q:?}"))?;
    }
    let mut worst_norm = 0.0f64;
    for _ in 0..100_000 {
        let mag = 10f64.powf(rng.gen_range(-3.0..12.0));
        let d: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let q = c(d[0] * mag, d[1] * mag, d[2] * mag);
        worst_norm = worst_norm.max(q.sup_norm());
    }
    ensure(worst_norm <= 2.0, || format!("sup-norm {worst_norm}"))?;
    let mut worst_gap = 0.0f64;
    for _ in 0..10_000 {
        let mut d: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let axis = rng.gen_range(0..3);
        d[axis] = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let inside = c(d[0] * (1.0 - 1e-9), d[1] * (1.0 - 1e-9), d[2] * (1.0 - 1e-9));
        let outside = c(d[0] * (1.0 + 1e-9), d[1] * (1.0 + 1e-9), d[2] * (1.0 + 1e-9));
        worst_gap = worst_gap.max((inside.x - outside.x).abs().max((inside.y - outside.y).abs()).max((inside.z - outside.z).abs()));
    }
    ensure(worst_gap <= 1e-5, || format!("boundary gap {worst_gap:e}"))?;
    let a = c(4.0, 1.0, 1.0);
    ensure(a == Point3::new(1.75, 0.25, 0.25), || format!("(4,1,1) -> {a:?}"))?;
    let b = c(0.0, -3.0, 0.0);
    ensure(b.x == 0.0 && (b.y + 5.0 / 3.0).abs() < 1e-15 && b.z == 0.0, || format!("(0,-3,0) -> {b:?}"))?;
    Ok(format!("sup-norm max {worst_norm:.6}, boundary gap {worst_gap:.1e}"))
}

fn interleaved_bits(q: &QuantizedPosition) -> Vec<bool> {
    let mut bits = Vec::with_capacity(48);
    for b in (0..16).rev() {
        bits.push((q.qz >> b) & 1 == 1);
        bits.push((q.qy >> b) & 1 == 1);
        bits.push((q.qx >> b) & 1 == 1);
    }
    bits
}

fn lossless() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for trial in 0..1000 {
        let n = rng.gen_range(0..400);
        let pts: Vec<QuantizedPosition> = (0..n)
            .map(|_| QuantizedPosition::new(rng.gen(), rng.gen(), rng.gen()))
            .collect();
        let pack = PositionPack::new(&pts);
        let decoded = decode_positions(&code_positions(&pack)).map_err(|e| e.to_string())?;
        ensure(decoded.positions() == pts, || format!("position pack {trial} differs"))?;

        let r = rng.gen_range(2..10);
        let ch = rng.gen_range(1..3);
        let mut field = TriPlaneField::random(r, ch, 0, &mut rng).map_err(|e| e.to_string())?;
        let amp = 10f64.powf(rng.gen_range(-3.0..3.0));
        field.planes_mut().for_each(|p| p.values_mut().iter_mut().for_each(|v| *v *= amp));
        let layout = if trial % 2 == 0 { LayoutKind::PerSlice } else { LayoutKind::Tiled };
        let frames = pack_planes(&field, layout).map_err(|e| e.to_string())?;
        let settings = CodecSettings {
            lossless: true,
            qp: rng.gen_range(0..52),
            ..CodecSettings::default()
        };
        let bytes = encode_frames_builtin(&frames, &settings).map_err(|e| e.to_string())?;
        let back = decode_frames_builtin(&bytes).map_err(|e| e.to_string())?;
        ensure(back.frames == frames.frames, || format!("frame pack {trial} differs"))?;
    }
    let pts: Vec<QuantizedPosition> = (0..10_000)
        .map(|_| QuantizedPosition::new(rng.gen(), rng.gen::<u16>() & 0xff0f, rng.gen()))
        .collect();
    let mut brute: Vec<usize> = (0..pts.len()).collect();
    brute.sort_by(|&a, &b| interleaved_bits(&pts[a]).cmp(&interleaved_bits(&pts[b])));
    ensure(morton_order(&pts) == brute, || "Morton order differs from the brute-force comparator".into())?;
    Ok("1000 position packs and 1000 lossless frame packs exact; Morton order of 10^4 points matches".into())
}

fn bit_allocation() -> Outcome {
    let w = channel_weights(&[2.0, 1.0, 0.5], 1e3);
    ensure(w == vec![1.0, 2.0, 4.0], || format!("CI [2,1,0.5] -> {w:?}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for _ in 0..1000 {
        let n = rng.gen_range(1..9);
        let ci: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.gen_range(-2.0..2.0))).collect();
        let w = channel_weights(&ci, 1e3);
        ensure(w[0] == 1.0, || format!("w_1 = {}", w[0]))?;
        let s = 10f64.powf(rng.gen_range(-6.0..6.0));
        let scaled: Vec<f64> = ci.iter().map(|v| v * s).collect();
        let ws = channel_weights(&scaled, 1e3);
        for (a, b) in w.iter().zip(&ws) {
            ensure((a - b).abs() <= 1e-12 * a.abs(), || format!("rescaling by {s} changed {a} to {b}"))?;
        }
    }
    Ok("w_1 = 1, [2,1,0.5] -> [1,2,4], scale invariant on 1000 draws".into())
}

fn rate_distortion() -> Outcome {
    let start = Instant::now();
    let cloud = synthetic_scene(2000, 0, 7).map_err(|e| e.to_string())?;
    let target = SurrogateTarget::new(cloud).map_err(|e| e.to_string())?;
    let (lambda_l1, lambda_ent) = (1e-12, 1e-11);
    let mut base = TrainConfig {
        resolution: 64,
        ..TrainConfig::default()
    }
    .scaled(3000, 4)
    .map_err(|e| e.to_string())?;
    base.weights = LossWeights { lambda_ent: 0.0, lambda_l1 };
    let arms = standard_arms(lambda_l1, lambda_ent);
    let results = run_arms(&base, &target, &arms, &CodecSettings::default(), LayoutKind::PerSlice)
        .map_err(|e| e.to_string())?;
    let [l1, ent, wc] = [&results[0].rate, &results[1].rate, &results[2].rate];
    let summary = format!(
        "l1-only {} B @ {:.2} dB, +ent {} B @ {:.2} dB, +wc {} B @ {:.2} dB, {:.0}s",
        l1.plane_bytes,
        l1.psnr_db,
        ent.plane_bytes,
        ent.psnr_db,
        wc.plane_bytes,
        wc.psnr_db,
        start.elapsed().as_secs_f64()
    );
    ensure(
        (ent.plane_bytes as f64) <= 0.8 * l1.plane_bytes as f64 && (ent.psnr_db - l1.psnr_db).abs() <= 0.5,
        || format!("entropy arm not 20% smaller at matched quality: {summary}"),
    )?;
    ensure(
        wc.plane_bytes <= ent.plane_bytes && (wc.psnr_db - l1.psnr_db).abs() <= 0.5,
        || format!("weighted arm larger or off quality: {summary}"),
    )?;
    Ok(summary)
}

fn q_step_sweep() -> Outcome {
    let cloud = synthetic_scene(300, 0, 13).map_err(|e| e.to_string())?;
    let target = SurrogateTarget::new(cloud).map_err(|e| e.to_string())?;
    let mut base = TrainConfig {
        resolution: 16,
        hidden: 16,
        ..TrainConfig::default()
    }
    .scaled(400, 2)
    .map_err(|e| e.to_string())?;
    base.weights = LossWeights { lambda_ent: 1e-8, lambda_l1: 0.0 };
    let rows = sweep_q_step(&base, &target, &Q_STEP_GRID, &CodecSettings::default(), LayoutKind::PerSlice)
        .map_err(|e| e.to_string())?;
    ensure(rows.len() == 7, || format!("{} rows", rows.len()))?;
    for (row, q) in rows.iter().zip((0..=12).step_by(2)) {
        ensure(row.q_step == f64::powi(2.0, q), || format!("grid row {} expected 2^{q}", row.q_step))?;
        ensure(row.lambda_ent == 1e-8, || "rows differ in lambda_ent".into())?;
        ensure(row.rate.plane_bytes > 0 && row.rate.psnr_db.is_finite(), || format!("bad row {row:?}"))?;
    }
    let sizes: Vec<String> = rows.iter().map(|r| r.rate.plane_bytes.to_string()).collect();
    Ok(format!("7 rows, sizes {}", sizes.join("/")))
}

fn golden_commands() -> Outcome {
    let job = ExternalJob {
        input: "planes.yuv".into(),
        bitstream: "planes.bin".into(),
        width: 512,
        height: 512,
        frames: 32,
    };
    let hm = CodecSettings {
        backend: Backend::ExternalHm,
        ..CodecSettings::default()
    };
    let golden_hm = "TAppEncoder -c encoder_randomaccess_main_rext.cfg --InputFile=planes.yuv --SourceWidth=512 \
                     --SourceHeight=512 --InputBitDepth=16 --InternalBitDepth=16 --OutputBitDepth=16 \
                     --InputChromaFormat=400 --FrameRate=30 --FramesToBeEncoded=32 --QP=1 --BitstreamFile=planes.bin";
    let got = build_external_command(&job, &hm).map_err(|e| e.to_string())?;
    ensure(got == golden_hm, || format!("HM command differs:\n{got}\n{golden_hm}"))?;

    let x265 = CodecSettings {
        backend: Backend::ExternalX265,
        lossless: true,
        ..CodecSettings::default()
    };
    let job = ExternalJob {
        bitstream: "planes.mp4".into(),
        ..job
    };
    let golden_x265 = "ffmpeg -y -pix_fmt gray16be -s 512x512 -framerate 30 -i planes.yuv -c:v libx265 \
                       -x265-params lossless=1 planes.mp4";
    let got = build_external_command(&job, &x265).map_err(|e| e.to_string())?;
    ensure(got == golden_x265, || format!("x265 command differs:\n{got}\n{golden_x265}"))?;

    let golden_stanza = "#        Type POC QPoffset (...)\n\
                         Frame1:  B   16   0\nFrame2:  B    8   0\nFrame3:  B    4   0\nFrame4:  B    2   0\n\
                         Frame5:  B    1   0\nFrame6:  B    3   0\nFrame7:  B    6   0\nFrame8:  B    5   0\n\
                         Frame9:  B    7   0\nFrame10:  B   12   0\nFrame11:  B   10   0\nFrame12:  B    9   0\n\
                         Frame13:  B   11   0\nFrame14:  B   14   0\nFrame15:  B   13   0\nFrame16:  B   15   0\n";
    let stanza = hm_gop_stanza(&hm);
    ensure(stanza == golden_stanza, || format!("HM stanza differs:\n{stanza}"))?;
    Ok("HM, x265 and GOP stanza match byte for byte".into())
}

fn end_to_end_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = f64::NEG_INFINITY;
    let mut lossy = 0;
    for scene in 0..100 {
        let r = rng.gen_range(4..20);
        let ch = rng.gen_range(1..4);
        let sh = rng.gen_range(0..2);
        let field = TriPlaneField::random(r, ch, sh, &mut rng).map_err(|e| e.to_string())?;
        let decoders = random_decoders(ch, 16, sh, &mut rng);
        let n = rng.gen_range(1..150);
        let spread = rng.gen_range(0.5..8.0);
        let positions: Vec<Point3> = (0..n)
            .map(|_| Point3::new(rng.gen_range(-spread..spread), rng.gen_range(-spread..spread), rng.gen_range(-spread..spread)))
            .collect();
        let model = EntropyModel::for_field(256.0, BlockSpec::default(), &field).map_err(|e| e.to_string())?;
        let lossless = rng.gen_bool(0.3);
        lossy += usize::from(!lossless);
        let settings = EncodeSettings {
            codec: CodecSettings {
                qp: rng.gen_range(0..40),
                lossless,
                ..CodecSettings::default()
            },
            layout: if rng.gen_bool(0.5) { LayoutKind::PerSlice } else { LayoutKind::Tiled },
            ..EncodeSettings::default()
        };
        let encoded = encode_scene(&field, &decoders, &positions, &model, &settings).map_err(|e| e.to_string())?;
        let decoded = decode_scene(&encoded.bytes).map_err(|e| e.to_string())?;
        let reference = reference_cloud(&field, &decoders, &positions).map_err(|e| e.to_string())?;
        let (_, _, restored) = prepare_positions(&positions).map_err(|e| e.to_string())?;
        let texel = plane_error_bound(&encoded.frames.norm, &settings.codec);
        let bounds = attribute_error_bounds(&field, &stored_decoders(&decoders), &restored, texel)
            .map_err(|e| e.to_string())?;
        let v = bound_violation(&reference, &decoded, &bounds);
        worst = worst.max(v);
        ensure(v <= 0.0, || format!("scene {scene} exceeds its bound by {v:e}"))?;
    }
    Ok(format!("100 scenes ({lossy} lossy), worst slack {worst:.2e}"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("gradient correctness", gradients),
        ("DCT round trip", dct_round_trip),
        ("progressive masking exactness", masking),
        ("contraction", contraction),
        ("lossless contracts", lossless),
        ("bit-allocation algebra", bit_allocation),
        ("directional rate-distortion", rate_distortion),
        ("Q_step sweep harness", q_step_sweep),
        ("external command fidelity", golden_commands),
        ("end-to-end bound", end_to_end_bound),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
