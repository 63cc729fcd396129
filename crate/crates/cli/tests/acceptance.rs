//! Acceptance gate. Runs without the libtest harness so every criterion
//! prints exactly one PASS/FAIL line, passing or not:
//!
//!     cargo test -p anchor-refine-cli --test acceptance

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use anchor_refine::backend::{
    write_manifest, BackendError, CandidateMask, ManifestBackend, SegmentOutcome, Segmenter,
    SegmenterRequest,
};
use anchor_refine::entropy::{
    compute_entropy, pixel_entropy, region_filter, sample_anchors, EntropyMap, FilterParams,
};
use anchor_refine::metrics::{generate_scene, run_ablation, ConfusionMatrix, SceneParams};
use anchor_refine::tensor::{
    decode_binary_mask, decode_class_map, decode_probability_map, encode_binary_mask,
    encode_class_map, encode_probability_map, rle_decode, rle_encode,
};
use anchor_refine::{Anchor, BinaryMask, ClassMap, ProbabilityMap, RefineConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LN_18: f64 = 2.890_371_757_896_165;
const ENTROPY_TOL: f64 = 1e-4;
const PERMUTATION_TOL: f64 = 1e-6;
const ORACLE_INSTANCES: usize = 500;
const ROUND_TRIPS: usize = 200;
const ABLATION_SCENES: u64 = 20;
const ABLATION_BETA: usize = 600;

type Outcome = Result<String, String>;

struct Criterion {
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion {
            name: "entropy correctness",
            budget: Some(Duration::from_secs(1)),
            run: entropy_correctness,
        },
        Criterion {
            name: "region filter boundary suppression",
            budget: Some(Duration::from_secs(5)),
            run: region_filter_suppression,
        },
        Criterion {
            name: "fusion oracle equivalence",
            budget: Some(Duration::from_secs(30)),
            run: oracle_equivalence,
        },
        Criterion {
            name: "minimum-risk locality",
            budget: None,
            run: locality,
        },
        Criterion {
            name: "ablation ordering",
            budget: Some(Duration::from_secs(60)),
            run: ablation_ordering,
        },
        Criterion {
            name: "determinism",
            budget: None,
            run: determinism,
        },
        Criterion {
            name: "format round-trips",
            budget: None,
            run: format_round_trips,
        },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let result = std::panic::catch_unwind(c.run)
            .unwrap_or_else(|_| Err("panicked".to_string()))
            .and_then(|detail| match c.budget {
                Some(b) if start.elapsed() > b => Err(format!(
                    "{detail}; took {:.2?}, budget {:.0?}",
                    start.elapsed(),
                    b
                )),
                _ => Ok(detail),
            });
        match result {
            Ok(detail) => println!("PASS  {:<36} {:>9.2?}  {detail}", c.name, start.elapsed()),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {:<36} {:>9.2?}  {detail}", c.name, start.elapsed());
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_distribution(rng: &mut impl Rng, n: usize) -> Vec<f32> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 1e-3).collect();
    let sum: f64 = raw.iter().sum();
    raw.iter().map(|v| (v / sum) as f32).collect()
}

fn random_probability_map(rng: &mut impl Rng, h: usize, w: usize, n: usize) -> ProbabilityMap {
    let data = (0..h * w)
        .flat_map(|_| random_distribution(rng, n))
        .collect();
    ProbabilityMap::new(h, w, n, data).unwrap()
}

// ---------------------------------------------------------------- entropy

fn entropy_correctness() -> Outcome {
    for n in [1, 2, 5, 18] {
        for hot in 0..n {
            let v: Vec<f32> = (0..n).map(|k| if k == hot { 1.0 } else { 0.0 }).collect();
            let e = pixel_entropy(&v) as f64;
            check(e == 0.0, || format!("one-hot over {n} classes gave {e}"))?;
        }
    }
    let uniform = vec![1.0f32 / 18.0; 18];
    let e = pixel_entropy(&uniform) as f64;
    check((e - LN_18).abs() <= ENTROPY_TOL, || {
        format!("uniform over 18 gave {e}, expected {LN_18}")
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(2..=19);
        let mut v = random_distribution(&mut rng, n);
        let before = pixel_entropy(&v) as f64;
        v.shuffle(&mut rng);
        let after = pixel_entropy(&v) as f64;
        worst = worst.max((before - after).abs());
    }
    check(worst <= PERMUTATION_TOL, || {
        format!("permutation changed entropy by {worst}")
    })?;

    // the map-level path agrees with the per-pixel one
    let p = random_probability_map(&mut rng, 10, 10, 18);
    let map = compute_entropy(&p);
    for (i, px) in p.pixels().enumerate() {
        check(map.values()[i] == pixel_entropy(px), || {
            format!("map entropy differs at pixel {i}")
        })?;
    }
    Ok(format!(
        "uniform(18) = {e:.6} (tol {ENTROPY_TOL:e}); max permutation drift {worst:.1e} (tol {PERMUTATION_TOL:e})"
    ))
}

// ---------------------------------------------------------- region filter

fn region_filter_suppression() -> Outcome {
    let params = FilterParams::new(5, 1.0).unwrap();

    let (h, w) = (21, 21);
    for (label, ridge) in [
        (
            "row",
            Box::new(|r: usize, _c: usize| r == 10) as Box<dyn Fn(usize, usize) -> bool>,
        ),
        ("column", Box::new(|_r: usize, c: usize| c == 10)),
        ("diagonal", Box::new(|r: usize, c: usize| r == c)),
    ] {
        let values = (0..h * w)
            .map(|i| {
                if ridge(i / w, i % w) {
                    std::f32::consts::LN_2
                } else {
                    0.0
                }
            })
            .collect();
        let ent = EntropyMap::new(h, w, values).unwrap();
        let region = region_filter(&ent, params).unwrap();
        check(region.is_empty(), || {
            format!("{label} ridge left {} pixels", region.area())
        })?;
    }

    let blob_value = LN_18 as f32;
    for side in [5, 7] {
        let (top, left) = (6, 9);
        let values = (0..h * w)
            .map(|i| {
                let (r, c) = (i / w, i % w);
                if (top..top + side).contains(&r) && (left..left + side).contains(&c) {
                    blob_value
                } else {
                    0.0
                }
            })
            .collect();
        let ent = EntropyMap::new(h, w, values).unwrap();
        let region = region_filter(&ent, params).unwrap();
        let centre = (top + side / 2, left + side / 2);
        check(region.get(centre.0, centre.1), || {
            format!("{side}x{side} blob lost its centre")
        })?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for map_index in 0..50 {
        let (h, w) = (rng.gen_range(5..=24), rng.gen_range(5..=24));
        let values = (0..h * w).map(|_| rng.gen_range(0.0..3.0f32)).collect();
        let ent = EntropyMap::new(h, w, values).unwrap();
        let wnd = [1, 3, 5, 7, 9][rng.gen_range(0..5)];
        let mut taus: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..3.0)).collect();
        taus.sort_by(f64::total_cmp);
        let masks: Vec<BinaryMask> = taus
            .iter()
            .map(|&t| region_filter(&ent, FilterParams::new(wnd, t).unwrap()).unwrap())
            .collect();
        for pair in masks.windows(2) {
            check(pair[1].is_subset_of(&pair[0]), || {
                format!("map {map_index}: raising tau grew the region")
            })?;
        }
    }
    Ok("3 ridges removed, 2 blobs kept, 50 maps monotone in tau".to_string())
}

// ------------------------------------------------- fusion oracle instances

/// Hands back a fixed candidate list, rebased onto however many anchors
/// the pipeline asks about, and remembers what it returned.
struct ScriptedBackend {
    masks: Vec<(BinaryMask, f64)>,
    returned: std::sync::Mutex<Option<Vec<CandidateMask>>>,
}

impl Segmenter for ScriptedBackend {
    fn segment(&self, request: &SegmenterRequest) -> Result<SegmentOutcome, BackendError> {
        let n = request.anchors.len();
        let mut out: Vec<CandidateMask> = self
            .masks
            .iter()
            .enumerate()
            .map(|(j, (m, s))| CandidateMask::new(m.clone(), *s, j % n).unwrap())
            .collect();
        out.sort_by_key(|m| m.anchor_index());
        *self.returned.lock().unwrap() = Some(out.clone());
        Ok(SegmentOutcome {
            masks: out,
            failures: Vec::new(),
        })
    }
}

/// An accepted mask as the reference sees it: bits, class, area.
type Accepted = (Vec<bool>, u8, usize);

struct Instance {
    y: ClassMap,
    p: ProbabilityMap,
    config: RefineConfig,
    masks: Vec<(BinaryMask, f64)>,
}

fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (rng.gen_range(1..=16), rng.gen_range(1..=16));
    let n = rng.gen_range(2..=5);
    let p = random_probability_map(&mut rng, h, w, n);
    let y = ClassMap::new(
        h,
        w,
        (0..h * w).map(|_| rng.gen_range(0..n as u8)).collect(),
    )
    .unwrap();
    let max_w = 2 * h.min(w) - 1;
    let wnd = (1..=max_w.min(7)).step_by(2).collect::<Vec<_>>();
    let n_masks = rng.gen_range(0..=6);
    let masks = (0..n_masks)
        .map(|_| {
            let density = rng.gen_range(0.0..1.0);
            let shape = rng.gen_range(0..3);
            let (r0, c0) = (rng.gen_range(0..h), rng.gen_range(0..w));
            let (r1, c1) = (rng.gen_range(r0..h), rng.gen_range(c0..w));
            let mask = match shape {
                0 => BinaryMask::empty(h, w),
                1 => BinaryMask::from_fn(h, w, |r, c| {
                    (r0..=r1).contains(&r) && (c0..=c1).contains(&c)
                }),
                _ => BinaryMask::from_fn(h, w, |_, _| rng.gen_bool(density)),
            };
            // scores land on the filter threshold now and then
            let score = if rng.gen_bool(0.2) {
                0.7
            } else {
                rng.gen_range(0.0..=1.0)
            };
            (mask, score)
        })
        .collect();
    let config = RefineConfig {
        w: *wnd.choose(&mut rng).unwrap(),
        tau: rng.gen_range(0.0..0.8),
        alpha: 0.7,
        beta: rng.gen_range(1..=h * w + 2),
        k: rng.gen_range(1..=12),
        seed: rng.gen(),
        enhance: rng.gen_bool(0.9),
        use_filter: rng.gen_bool(0.7),
        use_sort: rng.gen_bool(0.7),
    };
    Instance {
        y,
        p,
        config,
        masks,
    }
}

/// Straight-line reference: no shared code with the library's fusion path.
fn simulate(
    y: &ClassMap,
    masks: &[CandidateMask],
    config: &RefineConfig,
) -> (Vec<u8>, Vec<Accepted>) {
    let labels = y.labels();
    let mut accepted: Vec<Accepted> = Vec::new();
    for m in masks {
        let bits = m.mask().bits().to_vec();
        let area = bits.iter().filter(|&&b| b).count();
        if config.use_filter && !(m.score() >= config.alpha && area <= config.beta) {
            continue;
        }
        if area == 0 {
            continue;
        }
        let mut counts = [0usize; 256];
        for (i, &b) in bits.iter().enumerate() {
            if b {
                counts[labels[i] as usize] += 1;
            }
        }
        let mut cls = 0usize;
        for c in 0..256 {
            if counts[c] > counts[cls] {
                cls = c;
            }
        }
        accepted.push((bits, cls as u8, area));
    }
    if config.use_sort {
        // insertion sort: moves an item left only past strictly smaller areas
        for i in 1..accepted.len() {
            let mut j = i;
            while j > 0 && accepted[j - 1].2 < accepted[j].2 {
                accepted.swap(j - 1, j);
                j -= 1;
            }
        }
    }
    let mut out = labels.to_vec();
    for (bits, cls, _) in &accepted {
        for (i, &b) in bits.iter().enumerate() {
            if b {
                out[i] = *cls;
            }
        }
    }
    (out, accepted)
}

/// Independent region check: natural-log entropy, replicate-padded box mean.
fn brute_region(p: &ProbabilityMap, wnd: usize, tau: f64) -> Vec<bool> {
    let (h, w) = (p.height(), p.width());
    let ent: Vec<f64> = p
        .pixels()
        .map(|px| {
            let e: f64 = -px
                .iter()
                .filter(|&&v| v > 0.0)
                .map(|&v| v as f64 * (v as f64).ln())
                .sum::<f64>();
            e.clamp(0.0, (px.len() as f64).ln()) as f32 as f64
        })
        .collect();
    let half = (wnd / 2) as isize;
    (0..h * w)
        .map(|i| {
            let (r, c) = ((i / w) as isize, (i % w) as isize);
            let mut sum = 0.0;
            for dr in -half..=half {
                for dc in -half..=half {
                    let rr = (r + dr).clamp(0, h as isize - 1) as usize;
                    let cc = (c + dc).clamp(0, w as isize - 1) as usize;
                    sum += ent[rr * w + cc];
                }
            }
            sum / (wnd * wnd) as f64 >= tau
        })
        .collect()
}

fn run_instance(
    inst: &Instance,
    config: &RefineConfig,
) -> Result<(ClassMap, Vec<u8>, Vec<Accepted>), String> {
    let backend = ScriptedBackend {
        masks: inst.masks.clone(),
        returned: Default::default(),
    };
    let out = config
        .refine(&inst.y, &inst.p, &backend, "oracle")
        .map_err(|e| e.to_string())?;
    let returned = backend.returned.lock().unwrap().take();
    if !config.enhance {
        if returned.is_some() {
            return Err("backend called with enhancement off".into());
        }
        return Ok((out.prediction, inst.y.labels().to_vec(), Vec::new()));
    }
    let region = brute_region(&inst.p, config.w, config.tau);
    let region_size = region.iter().filter(|&&b| b).count();
    let expected_anchors = config.k.min(region_size);
    if out.anchors.len() != expected_anchors {
        return Err(format!(
            "{} anchors, expected {expected_anchors}",
            out.anchors.len()
        ));
    }
    let mut seen = std::collections::HashSet::new();
    for a in &out.anchors {
        if !region[a.row * inst.y.width() + a.col] || !seen.insert(*a) {
            return Err(format!("anchor {a:?} outside region or repeated"));
        }
    }
    let Some(returned) = returned else {
        if region_size == 0 {
            return Ok((out.prediction, inst.y.labels().to_vec(), Vec::new()));
        }
        return Err("backend never called".into());
    };
    let (expected, accepted) = simulate(&inst.y, &returned, config);
    Ok((out.prediction, expected, accepted))
}

fn oracle_equivalence() -> Outcome {
    let mut mismatches = Vec::new();
    let mut exercised = 0;
    for seed in 0..ORACLE_INSTANCES as u64 {
        let inst = instance(seed);
        match run_instance(&inst, &inst.config) {
            Ok((got, expected, accepted)) => {
                if !accepted.is_empty() {
                    exercised += 1;
                }
                if got.labels() != expected.as_slice() {
                    mismatches.push(seed);
                }
            }
            Err(e) => mismatches.push({
                eprintln!("instance {seed}: {e}");
                seed
            }),
        }
    }
    check(mismatches.is_empty(), || {
        format!(
            "{} mismatches, first seeds {:?}",
            mismatches.len(),
            &mismatches[..mismatches.len().min(5)]
        )
    })?;
    Ok(format!(
        "{ORACLE_INSTANCES} instances, 0 mismatches ({exercised} with at least one accepted mask)"
    ))
}

fn locality() -> Outcome {
    let mut violations = 0usize;
    let mut contested = 0usize;
    for seed in 0..ORACLE_INSTANCES as u64 {
        let inst = instance(seed);
        let config = RefineConfig {
            enhance: true,
            use_sort: true,
            ..inst.config
        };
        let (got, _, accepted) = run_instance(&inst, &config)?;
        let labels = inst.y.labels();
        for (i, (&after, &before)) in got.labels().iter().zip(labels).enumerate() {
            let covering: Vec<usize> = (0..accepted.len()).filter(|&j| accepted[j].0[i]).collect();
            if covering.is_empty() {
                if after != before {
                    violations += 1;
                }
                continue;
            }
            if covering.len() > 1 {
                contested += 1;
            }
            // smallest area wins; among equals the last in stable order
            let min_area = covering.iter().map(|&j| accepted[j].2).min().unwrap();
            let winner = *covering
                .iter()
                .rfind(|&&j| accepted[j].2 == min_area)
                .unwrap();
            if after != accepted[winner].1 {
                violations += 1;
            }
        }
    }
    check(violations == 0, || format!("{violations} violations"))?;
    Ok(format!(
        "{ORACLE_INSTANCES} instances, 0 violations ({contested} contested pixels checked)"
    ))
}

// --------------------------------------------------------------- ablation

fn ablation_ordering() -> Outcome {
    let params = SceneParams::default();
    let scenes: Vec<_> = (0..ABLATION_SCENES)
        .map(|s| generate_scene(s, &params))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let mut base = ConfusionMatrix::new(params.num_classes);
    for s in &scenes {
        base.accumulate(&s.prediction, &s.truth, None)
            .map_err(|e| e.to_string())?;
    }
    let base_miou = base.mean_iou().ok_or("base mIoU undefined")?;
    let config = RefineConfig {
        beta: ABLATION_BETA,
        ..Default::default()
    };
    let rows = run_ablation(&scenes, &config.ablation_grid(), params.num_classes, None)
        .map_err(|e| e.to_string())?;
    let mious: Vec<f64> = rows
        .iter()
        .map(|r| {
            r.miou()
                .ok_or_else(|| format!("{}: mIoU undefined", r.name))
        })
        .collect::<Result<_, _>>()?;
    let summary = rows
        .iter()
        .zip(&mious)
        .map(|(r, m)| format!("{}={:.2}", r.name, m * 100.0))
        .collect::<Vec<_>>()
        .join(" ");
    check(mious[0] == base_miou, || {
        format!("enhance-off {} != base {}", mious[0], base_miou)
    })?;
    let all_on = mious[3];
    check(mious.iter().all(|&m| all_on >= m), || {
        format!("all-on is not the best row: {summary}")
    })?;
    Ok(format!(
        "{ABLATION_SCENES} scenes, beta={ABLATION_BETA}: {summary}"
    ))
}

// ------------------------------------------------------------ determinism

fn cli(args: &[&str], threads: &str) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_anchor-refine"))
        .args(args)
        .env("RAYON_NUM_THREADS", threads)
        .env_remove("ANCHOR_REFINE_CONFIG")
        .output()
        .map_err(|e| e.to_string())?;
    check(out.status.success(), || {
        format!(
            "anchor-refine {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let scene = generate_scene(7, &SceneParams::default()).map_err(|e| e.to_string())?;
    scene.save(d).map_err(|e| e.to_string())?;
    let s = |name: &str| d.join(name).to_string_lossy().into_owned();

    let mut refined = Vec::new();
    for (run, threads) in [(0, "1"), (1, "4"), (2, "4")] {
        let out = s(&format!("refined_{run}.pgm"));
        cli(
            &[
                "refine",
                &s("pred.pgm"),
                &s("prob.ptm"),
                &out,
                "--backend",
                "mock",
                "--scene",
                &s("scene.json"),
                "--beta",
                "600",
                "--seed",
                "11",
            ],
            threads,
        )?;
        refined.push(read(Path::new(&out)));
    }
    check(refined.windows(2).all(|p| p[0] == p[1]), || {
        "refine outputs differ between runs".to_string()
    })?;
    check(refined[0] != read(&d.join("pred.pgm")), || {
        "refine changed nothing; scene too easy to test determinism".to_string()
    })?;

    cli(&["entropy", &s("prob.ptm"), &s("ent.bin")], "4")?;
    cli(&["regions", &s("ent.bin"), &s("region.pgm")], "4")?;
    let mut anchor_files = Vec::new();
    for (run, threads) in [(0, "1"), (1, "4"), (2, "2")] {
        let out = s(&format!("anchors_{run}.json"));
        cli(
            &["anchors", &s("region.pgm"), &out, "--seed", "11"],
            threads,
        )?;
        anchor_files.push(read(Path::new(&out)));
    }
    check(anchor_files.windows(2).all(|p| p[0] == p[1]), || {
        "anchor lists differ between runs".to_string()
    })?;

    // in-process: same anchors and refinement whatever the pool size
    let region = region_filter(&compute_entropy(&scene.base_p), FilterParams::default()).unwrap();
    let pooled = |threads: usize| -> (Vec<Anchor>, ClassMap) {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            let oracle = anchor_refine::backend::MockOracle::new(scene.scene.clone()).unwrap();
            let config = RefineConfig {
                beta: 600,
                seed: 11,
                ..Default::default()
            };
            let refined = config
                .refine(&scene.prediction, &scene.base_p, &oracle, "x")
                .unwrap();
            (sample_anchors(&region, 1000, 11), refined.prediction)
        })
    };
    let (a1, r1) = pooled(1);
    let (a4, r4) = pooled(4);
    check(a1 == a4 && r1 == r4, || {
        "results depend on thread count".to_string()
    })?;
    let cli_anchors: Vec<Anchor> = serde_json::from_slice(&anchor_files[0]).unwrap();
    check(cli_anchors == a1, || {
        "CLI anchors differ from library anchors".to_string()
    })?;
    Ok(format!(
        "3 refine runs identical ({} bytes), 3 anchor runs identical ({} anchors), pools of 1 and 4 agree",
        refined[0].len(),
        a1.len()
    ))
}

// -------------------------------------------------------------- formats

fn random_mask(rng: &mut impl Rng, h: usize, w: usize) -> BinaryMask {
    let density = rng.gen_range(0.0..=1.0);
    BinaryMask::from_fn(h, w, |_, _| rng.gen_bool(density))
}

fn format_round_trips() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for i in 0..ROUND_TRIPS {
        let (h, w, n) = (
            rng.gen_range(1..=20),
            rng.gen_range(1..=20),
            rng.gen_range(1..=20),
        );
        let p = random_probability_map(&mut rng, h, w, n);
        let bytes = encode_probability_map(&p);
        let back = decode_probability_map(&bytes).map_err(|e| format!("PTM1 #{i}: {e}"))?;
        check(
            back.data()
                .iter()
                .zip(p.data())
                .all(|(a, b)| a.to_bits() == b.to_bits())
                && encode_probability_map(&back) == bytes,
            || format!("PTM1 #{i} not bitwise identical"),
        )?;
    }
    for i in 0..ROUND_TRIPS {
        let (h, w) = (rng.gen_range(1..=40), rng.gen_range(1..=40));
        let map = ClassMap::new(h, w, (0..h * w).map(|_| rng.gen()).collect()).unwrap();
        let bytes = encode_class_map(&map);
        let back = decode_class_map(&bytes).map_err(|e| format!("PGM #{i}: {e}"))?;
        check(back == map && encode_class_map(&back) == bytes, || {
            format!("PGM class map #{i} differs")
        })?;
        let mask = random_mask(&mut rng, h, w);
        let bytes = encode_binary_mask(&mask);
        let back = decode_binary_mask(&bytes).map_err(|e| format!("PGM mask #{i}: {e}"))?;
        check(back == mask && encode_binary_mask(&back) == bytes, || {
            format!("PGM mask #{i} differs")
        })?;
    }
    for i in 0..ROUND_TRIPS {
        let (h, w) = (rng.gen_range(1..=40), rng.gen_range(1..=40));
        let mask = random_mask(&mut rng, h, w);
        let rle = rle_encode(&mask);
        let back = rle_decode(&rle).map_err(|e| format!("RLE #{i}: {e}"))?;
        let json = serde_json::to_string(&rle).unwrap();
        let reparsed = serde_json::from_str(&json).unwrap();
        check(
            back == mask && rle == reparsed && rle_encode(&back) == rle,
            || format!("RLE #{i} differs"),
        )?;
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for i in 0..ROUND_TRIPS {
        let (h, w) = (rng.gen_range(1..=12), rng.gen_range(1..=12));
        let entries: Vec<(Anchor, f64, BinaryMask)> = (0..rng.gen_range(0..4))
            .map(|_| {
                let a = Anchor::new(rng.gen_range(0..h), rng.gen_range(0..w));
                (a, rng.gen_range(0.0..=1.0), random_mask(&mut rng, h, w))
            })
            .collect();
        let first = write_manifest(dir.path(), &format!("a{i}"), "img", h, w, &entries)
            .map_err(|e| format!("manifest #{i}: {e}"))?;
        let loaded = ManifestBackend::load(&first).map_err(|e| format!("manifest #{i}: {e}"))?;
        let replayed: Vec<(Anchor, f64, BinaryMask)> = loaded
            .entries()
            .map(|(a, s, m)| (a, s, m.clone()))
            .collect();
        check(
            replayed.len() == entries.len()
                && replayed
                    .iter()
                    .zip(&entries)
                    .all(|(x, y)| x.0 == y.0 && x.1.to_bits() == y.1.to_bits() && x.2 == y.2),
            || format!("manifest #{i} entries differ"),
        )?;
        let second = write_manifest(dir.path(), &format!("b{i}"), "img", h, w, &replayed)
            .map_err(|e| format!("manifest #{i}: {e}"))?;
        let normalise = |s: String, stem: &str| s.replace(&format!("\"{stem}_"), "\"x_");
        check(
            normalise(std::fs::read_to_string(&first).unwrap(), &format!("a{i}"))
                == normalise(std::fs::read_to_string(&second).unwrap(), &format!("b{i}")),
            || format!("manifest #{i} JSON differs"),
        )?;
    }
    Ok(format!(
        "{ROUND_TRIPS} each of PTM1, PGM (labels and masks), RLE, manifest: bitwise identical"
    ))
}
