//! The four subcommands: synth, detect, verify, compare.
//!
//! Each command that takes `--out` fills the directory with its data files
//! plus exactly one `manifest.txt`, and every write goes through a rename so
//! interrupted runs leave no torn files. `verify` is the only command whose
//! exit status encodes a result: 0 means every requested check certified, 1
//! means at least one violation was recorded.

use crate::manifest::RunManifest;
use crate::util::{
    atomic_write, fail, resolve_cube_paths, Failure, EXIT_USAGE, EXIT_VIOLATION,
};
use crate::{Algorithm, Check, Command, CompareArgs, DetectArgs, MapFormat, SynthArgs, VerifyArgs};
use specdet::detectors::{
    acem_weights, apply_detector, cem_subset_weights, cem_weights, mf_weights, BandSubset,
    DetectionMap, TargetSignature,
};
use specdet::io;
use specdet::stats::accumulate_stats;
use specdet::synth::{generate_scene, SceneConfig};
use specdet::verify::{
    bands_independent, check_theorem1, check_theorem2, pearson_r2, roc_auc, SubsetSelection,
    Theorem1Report, Theorem2Report, ALL_PROPER_LIMIT,
};
use specdet::SpectralCube;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

pub fn run(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Synth(args) => cmd_synth(args),
        Command::Detect(args) => cmd_detect(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Compare(args) => cmd_compare(args),
    }
}

fn kv(out: &mut String, key: &str, value: impl std::fmt::Display) {
    let _ = writeln!(out, "{key} = {value}");
}

fn subset_label(subset: &BandSubset) -> String {
    subset
        .indices()
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn cmd_synth(args: SynthArgs) -> Result<u8, Failure> {
    let start = Instant::now();
    let mut config = match &args.config {
        Some(path) => SceneConfig::from_key_value_text(&std::fs::read_to_string(path)?)?,
        None => SceneConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let scene = generate_scene(&config)?;

    std::fs::create_dir_all(&args.out)?;
    let (header_text, payload) = io::write_cube(&scene.cube, &io::EnviWriteOptions::default())?;
    atomic_write(&args.out.join("scene.hdr"), header_text.as_bytes())?;
    atomic_write(&args.out.join("scene.img"), &payload)?;
    atomic_write(
        &args.out.join("truth.csv"),
        io::truth_to_csv(&scene.truth, config.rows, config.cols).as_bytes(),
    )?;
    atomic_write(
        &args.out.join("target.csv"),
        io::signature_to_lines(scene.target.values()).as_bytes(),
    )?;

    let mut manifest = RunManifest::new("synth");
    if let Some(path) = &args.config {
        manifest.record("config_file", path.display());
    }
    for line in config.to_key_value_text().lines() {
        if let Some((key, value)) = line.split_once(" = ") {
            manifest.record(&format!("config.{key}"), value);
        }
    }
    atomic_write(
        &args.out.join("manifest.txt"),
        manifest.render(start.elapsed()).as_bytes(),
    )?;
    println!(
        "wrote scene to {} ({} x {} pixels, {} bands, seed {})",
        args.out.display(),
        config.rows,
        config.cols,
        config.bands,
        config.seed
    );
    Ok(0)
}

fn load_inputs(input: &Path, target: &Path) -> Result<(SpectralCube, TargetSignature), Failure> {
    let (hdr, img) = resolve_cube_paths(input)?;
    let (_, cube) = io::load_cube(&hdr, &img)?;
    let values = io::parse_signature_lines(&std::fs::read_to_string(target)?)?;
    let signature = match target.file_stem().map(|s| s.to_string_lossy().into_owned()) {
        Some(name) => TargetSignature::named(values, name),
        None => TargetSignature::new(values),
    };
    Ok((cube, signature))
}

fn parse_subset(spec: &str, bands: usize) -> Result<BandSubset, Failure> {
    let mut indices = Vec::new();
    for part in spec.split(',') {
        let index = part.trim().parse::<usize>().map_err(|_| {
            fail(
                EXIT_USAGE,
                format!("--subset: `{part}` is not a band index"),
            )
        })?;
        indices.push(index);
    }
    Ok(BandSubset::new(&indices, bands)?)
}

fn write_map(out: &Path, map: &DetectionMap, format: MapFormat) -> Result<String, Failure> {
    match format {
        MapFormat::Envi => {
            let (header_text, payload) = io::map_to_envi(map);
            atomic_write(&out.join("map.hdr"), header_text.as_bytes())?;
            atomic_write(&out.join("map.img"), &payload)?;
            Ok("map.hdr, map.img".to_string())
        }
        MapFormat::Csv => {
            atomic_write(&out.join("map.csv"), io::map_to_csv(map).as_bytes())?;
            Ok("map.csv".to_string())
        }
        MapFormat::Pgm16 => {
            atomic_write(&out.join("map.pgm"), &io::map_to_pgm16(map))?;
            Ok("map.pgm".to_string())
        }
    }
}

fn cmd_detect(args: DetectArgs) -> Result<u8, Failure> {
    let start = Instant::now();
    let (cube, target) = load_inputs(&args.input, &args.target)?;
    let mut stats = accumulate_stats(&cube)?;
    if let Some(ridge) = args.ridge {
        if !ridge.is_finite() || ridge < 0.0 {
            return Err(fail(EXIT_USAGE, "--ridge must be a nonnegative fraction"));
        }
        stats = stats.ridged(ridge);
    }
    let subset = match (&args.subset, args.algorithm) {
        (None, _) => None,
        (Some(spec), Algorithm::Cem) => Some(parse_subset(spec, cube.bands())?),
        (Some(_), _) => {
            return Err(fail(
                EXIT_USAGE,
                "--subset applies to cem only; mf and acem always use every band",
            ))
        }
    };
    let weights = match (args.algorithm, &subset) {
        (Algorithm::Cem, Some(subset)) => cem_subset_weights(&stats, &target, subset)?,
        (Algorithm::Cem, None) => cem_weights(&stats, &target)?,
        (Algorithm::Mf, _) => mf_weights(&stats, &target)?,
        (Algorithm::Acem, _) => acem_weights(&stats, &target)?,
    };
    let map = apply_detector(&cube, &weights, &stats)?;

    std::fs::create_dir_all(&args.out)?;
    let map_files = write_map(&args.out, &map, args.format)?;
    let mut weights_csv = String::new();
    for (i, w) in weights.weights().iter().enumerate() {
        let band = match weights.subset() {
            Some(subset) => subset.indices()[i],
            None => i + 1,
        };
        let _ = writeln!(weights_csv, "{band},{w}");
    }
    atomic_write(&args.out.join("weights.csv"), weights_csv.as_bytes())?;

    let elapsed = start.elapsed();
    let mut summary = String::new();
    if args.machine_readable {
        kv(&mut summary, "command", "detect");
        kv(&mut summary, "algorithm", weights.kind());
        kv(&mut summary, "pixels", cube.n_pixels());
        kv(&mut summary, "bands", cube.bands());
        if let Some(subset) = weights.subset() {
            kv(&mut summary, "subset", subset_label(subset));
        }
        kv(&mut summary, "normalizer", weights.normalizer());
        kv(&mut summary, "mean_square_output", map.mean_square());
        kv(&mut summary, "elapsed_ms", elapsed.as_millis());
    } else {
        let _ = writeln!(
            summary,
            "{} over {} pixels x {} bands",
            weights.kind(),
            cube.n_pixels(),
            cube.bands()
        );
        if let Some(subset) = weights.subset() {
            let _ = writeln!(summary, "bands restricted to {{{}}}", subset_label(subset));
        }
        let note = match weights.kind() {
            specdet::DetectorKind::Cem => " (minimal mean output energy)",
            _ => "",
        };
        let _ = writeln!(summary, "normalizer: {}{note}", weights.normalizer());
        let _ = writeln!(summary, "mean squared output: {}", map.mean_square());
        let _ = writeln!(summary, "elapsed: {} ms", elapsed.as_millis());
    }
    atomic_write(&args.out.join("summary.txt"), summary.as_bytes())?;
    print!("{summary}");

    let mut manifest = RunManifest::new("detect");
    manifest.record("input", args.input.display());
    manifest.record("target", args.target.display());
    manifest.record("algorithm", weights.kind());
    if let Some(spec) = &args.subset {
        manifest.record("subset", spec);
    }
    if let Some(ridge) = args.ridge {
        manifest.record("ridge", ridge);
    }
    manifest.record("map_files", map_files);
    atomic_write(
        &args.out.join("manifest.txt"),
        manifest.render(elapsed).as_bytes(),
    )?;
    Ok(0)
}

fn render_theorem1(report: &Theorem1Report, machine: bool) -> String {
    let mut out = String::new();
    let relative_margin = report.strict_margin / report.full_energy;
    if machine {
        kv(&mut out, "check", "theorem1");
        kv(&mut out, "full_energy", report.full_energy);
        kv(&mut out, "subsets_checked", report.subset_energies.len());
        kv(&mut out, "skipped", report.skipped.len());
        kv(&mut out, "strict_margin", report.strict_margin);
        kv(&mut out, "relative_margin", relative_margin);
        kv(&mut out, "tolerance", report.tolerance);
        kv(&mut out, "violations", report.violations.len());
        kv(&mut out, "certified", u8::from(report.certified()));
        for (subset, energy) in &report.subset_energies {
            kv(
                &mut out,
                &format!("subset_energy.{}", subset_label(subset)),
                energy,
            );
        }
        for subset in &report.violations {
            kv(&mut out, "violation", subset_label(subset));
        }
        for (subset, error) in &report.skipped {
            kv(
                &mut out,
                &format!("skipped_subset.{}", subset_label(subset)),
                error,
            );
        }
    } else {
        let _ = writeln!(
            out,
            "theorem1: adding bands strictly lowers the optimal output energy"
        );
        let _ = writeln!(out, "full-band energy: {}", report.full_energy);
        let _ = writeln!(
            out,
            "subsets checked: {} ({} skipped)",
            report.subset_energies.len(),
            report.skipped.len()
        );
        let _ = writeln!(
            out,
            "smallest gap: {} (relative {relative_margin}, tolerance {})",
            report.strict_margin, report.tolerance
        );
        let _ = writeln!(out, "violations: {}", report.violations.len());
        let _ = writeln!(
            out,
            "certified: {}",
            if report.certified() { "yes" } else { "NO" }
        );
        for (subset, energy) in &report.subset_energies {
            let gap = energy - report.full_energy;
            let _ = writeln!(
                out,
                "  subset {{{}}}: energy {energy}, gap {gap}",
                subset_label(subset)
            );
        }
        for (subset, error) in &report.skipped {
            let _ = writeln!(out, "  skipped {{{}}}: {error}", subset_label(subset));
        }
    }
    out
}

fn render_theorem2(report: &Theorem2Report, machine: bool) -> String {
    let mut out = String::new();
    if machine {
        kv(&mut out, "check", "theorem2");
        kv(&mut out, "c_ratio", report.c_ratio);
        kv(
            &mut out,
            "max_component_deviation",
            report.max_component_deviation,
        );
        kv(&mut out, "map_r2", report.map_r2);
        kv(&mut out, "slope", report.slope);
        kv(&mut out, "intercept", report.intercept);
        kv(&mut out, "expected_intercept", report.expected_intercept);
        kv(&mut out, "tolerance", report.tolerance);
        kv(&mut out, "certified", u8::from(report.certified()));
    } else {
        let _ = writeln!(
            out,
            "theorem2: cem on the one-augmented cube equals the matched filter"
        );
        let _ = writeln!(
            out,
            "weight scale ratio c: {} (component deviation {}, tolerance {})",
            report.c_ratio, report.max_component_deviation, report.tolerance
        );
        let _ = writeln!(out, "map r^2: {}", report.map_r2);
        let _ = writeln!(
            out,
            "map fit: acem = {} * mf + {} (expected intercept {})",
            report.slope, report.intercept, report.expected_intercept
        );
        let _ = writeln!(
            out,
            "certified: {}",
            if report.certified() { "yes" } else { "NO" }
        );
    }
    out
}

fn cmd_verify(args: VerifyArgs) -> Result<u8, Failure> {
    let start = Instant::now();
    if args.ridge.is_some() {
        return Err(fail(
            EXIT_USAGE,
            "verify certifies the statistics as measured; drop --ridge (detect --ridge exists for exploratory scoring)",
        ));
    }
    if !args.tolerance.is_finite() || args.tolerance <= 0.0 || args.tolerance >= 1.0 {
        return Err(fail(EXIT_USAGE, "--tolerance must be in (0, 1)"));
    }
    let (cube, target) = load_inputs(&args.input, &args.target)?;
    let stats = accumulate_stats(&cube)?;
    if !bands_independent(&stats, 1e-8) {
        eprintln!(
            "warning: bands are numerically dependent; expect singular statistics"
        );
    }

    let mut report = String::new();
    let mut certified = true;
    if matches!(args.check, Check::Theorem1 | Check::Both) {
        let selection = if cube.bands() <= ALL_PROPER_LIMIT {
            SubsetSelection::AllProper
        } else {
            SubsetSelection::LeaveOneOut
        };
        let t1 = check_theorem1(&stats, &target, &selection, args.tolerance)?;
        report.push_str(&render_theorem1(&t1, args.machine_readable));
        certified &= t1.certified();
        println!(
            "theorem1: {} ({} subsets, smallest gap {})",
            if t1.certified() { "certified" } else { "VIOLATED" },
            t1.subset_energies.len(),
            t1.strict_margin
        );
    }
    if matches!(args.check, Check::Theorem2 | Check::Both) {
        if !report.is_empty() {
            report.push('\n');
        }
        let t2 = check_theorem2(&cube, &target, args.tolerance)?;
        report.push_str(&render_theorem2(&t2, args.machine_readable));
        certified &= t2.certified();
        println!(
            "theorem2: {} (map r^2 {}, component deviation {})",
            if t2.certified() { "certified" } else { "NOT certified" },
            t2.map_r2,
            t2.max_component_deviation
        );
    }

    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)?;
        atomic_write(&out.join("report.txt"), report.as_bytes())?;
        let mut manifest = RunManifest::new("verify");
        manifest.record("input", args.input.display());
        manifest.record("target", args.target.display());
        manifest.record("check", check_name(args.check));
        manifest.record("tolerance", args.tolerance);
        manifest.record("certified", u8::from(certified));
        atomic_write(
            &out.join("manifest.txt"),
            manifest.render(start.elapsed()).as_bytes(),
        )?;
    }
    Ok(if certified { 0 } else { EXIT_VIOLATION })
}

fn check_name(check: Check) -> &'static str {
    match check {
        Check::Theorem1 => "theorem1",
        Check::Theorem2 => "theorem2",
        Check::Both => "both",
    }
}

fn load_truth(path: &Path, rows: usize, cols: usize) -> Result<Vec<bool>, Failure> {
    let records = io::parse_truth_csv(&std::fs::read_to_string(path)?)?;
    let mut truth = vec![false; rows * cols];
    for (row, col, flag) in records {
        if row >= rows || col >= cols {
            return Err(Failure::from(io::IoError::MalformedRecord(format!(
                "truth pixel ({row},{col}) outside the {rows} x {cols} cube"
            ))));
        }
        truth[row * cols + col] = flag;
    }
    Ok(truth)
}

fn cmd_compare(args: CompareArgs) -> Result<u8, Failure> {
    let start = Instant::now();
    let (cube, target) = load_inputs(&args.input, &args.target)?;
    let stats = accumulate_stats(&cube)?;
    let maps = [
        apply_detector(&cube, &cem_weights(&stats, &target)?, &stats)?,
        apply_detector(&cube, &mf_weights(&stats, &target)?, &stats)?,
        apply_detector(&cube, &acem_weights(&stats, &target)?, &stats)?,
    ];

    std::fs::create_dir_all(&args.out)?;
    let mut r2_table = String::new();
    let mut stdout = String::new();
    for (a, b) in [(0usize, 1usize), (0, 2), (1, 2)] {
        let mut csv = String::new();
        for (ya, yb) in maps[a].scores().iter().zip(maps[b].scores()) {
            let _ = writeln!(csv, "{ya},{yb}");
        }
        let name = format!("scatter_{}_{}.csv", maps[a].kind(), maps[b].kind());
        atomic_write(&args.out.join(name), csv.as_bytes())?;
        let r2 = pearson_r2(maps[a].scores(), maps[b].scores())?;
        let _ = writeln!(r2_table, "{}_{},{r2}", maps[a].kind(), maps[b].kind());
        let _ = writeln!(stdout, "r2 {}_{} = {r2}", maps[a].kind(), maps[b].kind());
    }
    atomic_write(&args.out.join("r2_table.csv"), r2_table.as_bytes())?;

    if let Some(truth_path) = &args.truth {
        let truth = load_truth(truth_path, cube.rows(), cube.cols())?;
        let mut auc_table = String::new();
        for map in &maps {
            let auc = roc_auc(map, &truth)?;
            let _ = writeln!(auc_table, "{},{auc}", map.kind());
            let _ = writeln!(stdout, "auc {} = {auc}", map.kind());
        }
        atomic_write(&args.out.join("auc_table.csv"), auc_table.as_bytes())?;
    }

    let mut manifest = RunManifest::new("compare");
    manifest.record("input", args.input.display());
    manifest.record("target", args.target.display());
    if let Some(truth_path) = &args.truth {
        manifest.record("truth", truth_path.display());
    }
    atomic_write(
        &args.out.join("manifest.txt"),
        manifest.render(start.elapsed()).as_bytes(),
    )?;
    print!("{stdout}");
    Ok(0)
}
