//! The subcommands. Each returns an exit code or an error that maps to one.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fixdecomp_core::filters::{sigma_spectrum, strong_factor, weak_factor, ConditionReport, FACTOR_TOL};
use fixdecomp_core::harness::{decompose_cartoon, run_denoise, write_records_csv, DenoiseOptions, ModelConfig};
use fixdecomp_core::solver::write_trace_csv;
use fixdecomp_core::{DiagnosticsReport, Error as CoreError, FilterBank, RealGrid};
use log::info;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{Defaults, RunConfig};
use crate::fbank::{FbankContainer, FbankKind};
use crate::io::{encode_pgm, encode_sidecar, load_image, save_image, write_file, IoError};
use crate::{
    exit, BuildArgs, CheckArgs, DecomposeArgs, DenoiseArgs, ExportArgs, FiltersCommand, ImportArgs, ModelArgs,
    SpectrumArgs,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        exit::USAGE
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    p.as_deref().ok_or_else(|| usage(format!("missing {flag}")))
}

fn out_dir(p: &Option<PathBuf>) -> CliResult<&Path> {
    let dir = required(p, "--out")?;
    std::fs::create_dir_all(dir).map_err(|source| IoError::Io { path: dir.to_path_buf(), source })?;
    Ok(dir)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    Ok(write_file(path, text.as_bytes())?)
}

/// Config file, then `--set` pairs, then the flags.
fn run_config(args: &ModelArgs) -> CliResult<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| IoError::Io { path: path.clone(), source })?;
            RunConfig::parse_text(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    for pair in &args.set {
        cfg.set_pair(pair).map_err(usage)?;
    }
    let flags = RunConfig {
        model: args.model.clone(),
        mu: args.mu,
        beta: args.beta,
        kappa: args.kappa,
        gamma: args.gamma,
        j: args.scales,
        z: args.riesz,
        y1: args.y1,
        y2: args.y2,
        r1: args.r1,
        r2: args.r2,
        epsilon: args.epsilon,
        max_iters: args.max_iters,
        seed: None,
        reps: None,
    };
    // Range checks of the typed flags go through the same validator as the file keys.
    let mut checked = RunConfig::default();
    for (k, v) in flags.pairs() {
        checked.set(k, &v).map_err(usage)?;
    }
    Ok(cfg.overlay(&checked))
}

fn image_name(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("image").replace(',', "_")
}

fn condition_json(r: &ConditionReport) -> Value {
    json!({
        "min_sigma": r.min_val,
        "max_sigma": r.max_val,
        "max_imag": r.max_imag,
        "argmax": [r.argmax.0, r.argmax.1],
        "nepc_ok": r.nepc_ok,
        "cpc_ok": r.cpc_ok,
    })
}

fn diagnostics_json(d: &DiagnosticsReport) -> Value {
    json!({
        "iterations": d.iterations,
        "converged": d.converged,
        "rel_change": d.rel_change,
        "res_omega1": d.res_omega1,
        "res_omega2": d.res_omega2,
        "res_omega_c": d.res_omega_c,
        "res_dual_feas": d.res_dual_feas,
        "res_omega_f": d.res_omega_f,
    })
}

pub fn denoise(args: &DenoiseArgs) -> CliResult<u8> {
    let image_path = required(&args.image, "--image")?;
    let mut cfg = run_config(&args.model)?;
    if let Some(r) = args.reps {
        cfg.set("reps", &r.to_string()).map_err(usage)?;
    }
    if let Some(s) = args.seed {
        cfg.seed = Some(s);
    }
    if !(args.noise_scale.is_finite() && args.noise_scale >= 0.0) {
        return Err(usage("--noise-scale must be finite and non-negative"));
    }
    let model = cfg.model_config(&Defaults::denoise()).map_err(usage)?;
    let solver = cfg.solver_config().map_err(usage)?;
    let image = load_image(image_path)?;
    let out = out_dir(&args.out)?;
    let (n, m) = image.shape();
    let report = model.build(n, m)?.report;
    let opts = DenoiseOptions {
        reps: cfg.reps.unwrap_or(1),
        base_seed: cfg.seed.unwrap_or(0),
        noise_scale: args.noise_scale,
        kernel: None,
        solver,
        keep_outputs: !args.no_images,
    };
    info!("denoising {} with {} ({}), {} reps", image_path.display(), model.id(), model.params(), opts.reps);
    let run = run_denoise(&image, &model, &opts)?;
    let name = image_name(image_path);

    for (rec, u) in run.records.iter().zip(&run.outputs) {
        save_image(u, &out.join(format!("denoised_{:03}.pgm", rec.rep)))?;
    }
    let mut csv = Vec::new();
    write_records_csv(&name, &model, &run.records, true, &mut csv).expect("writing to memory");
    write_file(&out.join("stats.csv"), &csv)?;

    let s = &run.stat;
    let summary = format!(
        "image,model,params,reps,mean_psnr,sd_psnr,all_converged\n{},{},{},{},{},{},{}\n",
        name,
        model.id(),
        model.params(),
        s.reps,
        s.mean,
        s.sd,
        run.all_converged()
    );
    write_text(&out.join("summary.csv"), &summary)?;

    let mut lines = String::new();
    for r in &run.records {
        let line = json!({
            "image": name,
            "model": model.id(),
            "params": model.params(),
            "rep": r.rep,
            "seed": r.seed,
            "psnr": r.psnr,
            "iterations": r.iterations,
            "converged": r.converged,
            "rel_change": r.rel_change,
            "condition": condition_json(&report),
        });
        writeln!(lines, "{line}").unwrap();
    }
    write_text(&out.join("diagnostics.jsonl"), &lines)?;

    println!("{name} {} ({}): PSNR {:.4} ± {:.4} dB over {} reps", model.id(), model.params(), s.mean, s.sd, s.reps);
    if run.all_converged() {
        Ok(exit::OK)
    } else {
        let bad = run.records.iter().filter(|r| !r.converged).count();
        eprintln!("warning: {bad} of {} reps hit max_iters before converging", s.reps);
        Ok(exit::NOT_CONVERGED)
    }
}

pub fn decompose(args: &DecomposeArgs) -> CliResult<u8> {
    let image_path = required(&args.image, "--image")?;
    let cfg = run_config(&args.model)?;
    let model = cfg.model_config(&Defaults::decompose()).map_err(usage)?;
    let mut solver = cfg.solver_config().map_err(usage)?;
    if args.trace {
        solver = solver.traced();
    }
    let image = load_image(image_path)?;
    let out = out_dir(&args.out)?;
    let (res, report) = decompose_cartoon(&image, &model, &solver)?;

    save_image(&res.u, &out.join("cartoon.pgm"))?;
    write_file(&out.join("cartoon.f64"), &encode_sidecar(&res.u))?;
    write_file(&out.join("texture.pgm"), &encode_pgm(&res.residual.map(|v| v + 128.0)))?;
    write_file(&out.join("texture.f64"), &encode_sidecar(&res.residual))?;
    if args.trace {
        let mut csv = Vec::new();
        write_trace_csv(&res.trace, &mut csv).expect("writing to memory");
        write_file(&out.join("trace.csv"), &csv)?;
    }
    let diag = json!({
        "image": image_name(image_path),
        "model": model.id(),
        "params": model.params(),
        "rows": image.rows(),
        "cols": image.cols(),
        "diagnostics": diagnostics_json(&res.diagnostics),
        "condition": condition_json(&report),
        "cpc_ok": report.cpc_ok,
    });
    write_text(&out.join("diagnostics.json"), &format!("{}\n", serde_json::to_string_pretty(&diag).unwrap()))?;

    let d = &res.diagnostics;
    println!(
        "{} ({}): {} sweeps, converged {}, max sigma {:.6}",
        model.id(),
        model.params(),
        d.iterations,
        d.converged,
        report.max_val
    );
    Ok(if d.converged { exit::OK } else { exit::NOT_CONVERGED })
}

pub fn filters(cmd: &FiltersCommand) -> CliResult<u8> {
    match cmd {
        FiltersCommand::Build(a) => build(a),
        FiltersCommand::Check(a) => check(a),
        FiltersCommand::Export(a) => export(a),
        FiltersCommand::Import(a) => import(a),
        FiltersCommand::Spectrum(a) => spectrum(a),
    }
}

fn parse_size(s: &str) -> CliResult<(usize, usize)> {
    let bad = || usage(format!("--size expects ROWSxCOLS, got {s:?}"));
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let n: usize = a.trim().parse().map_err(|_| bad())?;
    let m: usize = b.trim().parse().map_err(|_| bad())?;
    if n == 0 || m == 0 {
        return Err(bad());
    }
    Ok((n, m))
}

fn model_meta(model: &ModelConfig, n: usize, m: usize) -> Vec<(String, String)> {
    vec![
        ("model".into(), model.id().into()),
        ("params".into(), model.params()),
        ("rows".into(), n.to_string()),
        ("cols".into(), m.to_string()),
        ("seed".into(), "none".into()),
    ]
}

fn build(args: &BuildArgs) -> CliResult<u8> {
    let (n, m) = match (&args.size, &args.image) {
        (Some(s), _) => parse_size(s)?,
        (None, Some(p)) => load_image(p)?.shape(),
        (None, None) => return Err(usage("give --size NxM or --image")),
    };
    let cfg = run_config(&args.model)?;
    let model = cfg.model_config(&Defaults::decompose()).map_err(usage)?;
    let built = model.build(n, m)?;
    let out = out_dir(&args.out)?;
    let meta = model_meta(&model, n, m);
    let t = &built.triple;
    FbankContainer::from_filter(FbankKind::A, t.a(), meta.clone()).write(&out.join("A.fbank"))?;
    FbankContainer::from_bank(FbankKind::B, t.b(), meta.clone()).write(&out.join("B.fbank"))?;
    FbankContainer::from_bank(FbankKind::Btilde, t.btilde(), meta.clone()).write(&out.join("Btilde.fbank"))?;
    let factor = weak_factor(t.b(), t.btilde(), FACTOR_TOL);
    if let Ok(y) = &factor {
        FbankContainer::from_bank(FbankKind::Y, &y.y, meta).write(&out.join("Y.fbank"))?;
    }
    let summary = json!({
        "model": model.id(),
        "params": model.params(),
        "rows": n,
        "cols": m,
        "members": t.len(),
        "weakly_factoring": factor.is_ok(),
        "condition": condition_json(&built.report),
    });
    println!("{}", serde_json::to_string_pretty(&summary).unwrap());
    Ok(exit::OK)
}

fn read_bank(path: &Path, expect: FbankKind) -> CliResult<FilterBank> {
    let c = FbankContainer::read(path)?;
    if c.kind != expect {
        return Err(usage(format!("{}: holds {}, expected {}", path.display(), c.kind.name(), expect.name())));
    }
    Ok(c.to_bank()?)
}

fn read_pair(b: &Option<PathBuf>, bt: &Option<PathBuf>) -> CliResult<(FilterBank, FilterBank)> {
    let b = read_bank(required(b, "--b")?, FbankKind::B)?;
    let bt = read_bank(required(bt, "--btilde")?, FbankKind::Btilde)?;
    if b.len() != bt.len() {
        return Err(CoreError::FamilySizeMismatch { left: b.len(), right: bt.len() }.into());
    }
    if b.shape() != bt.shape() {
        return Err(CoreError::ShapeMismatch { left: b.shape(), right: bt.shape() }.into());
    }
    Ok((b, bt))
}

const MAX_OFFENDERS: usize = 16;

// Bins where `bad` holds, worst σ first.
fn offending_bins(r: &ConditionReport, bad: impl Fn(f64, f64) -> bool) -> Vec<Value> {
    let (n, m) = r.sigma.shape();
    let sc = r.sigma_complex();
    let mut hits: Vec<(usize, usize, f64, f64)> = (0..n)
        .flat_map(|k| (0..m).map(move |l| (k, l)))
        .filter_map(|(k, l)| {
            let z = sc.at(k, l);
            bad(z.re, z.im).then_some((k, l, z.re, z.im))
        })
        .collect();
    hits.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    hits.iter().take(MAX_OFFENDERS).map(|&(k, l, re, im)| json!({"bin": [k, l], "sigma": re, "imag": im})).collect()
}

fn check(args: &CheckArgs) -> CliResult<u8> {
    if !(args.tol.is_finite() && args.tol > 0.0) {
        return Err(usage("--tol must be positive"));
    }
    let (b, bt) = read_pair(&args.b, &args.btilde)?;
    let tol = args.tol;
    let mut failed = Vec::new();

    let weak = match weak_factor(&b, &bt, tol) {
        Ok(_) => json!({"ok": true, "verdict": "weakly factoring"}),
        Err(e) => {
            let mut v = json!({"ok": false, "verdict": "not weakly factoring", "reason": e.to_string()});
            if let CoreError::NotWeaklyFactoring { p, k, l, ratio_re, ratio_im } = e {
                v["offending"] = json!({"member": p, "bin": [k, l], "ratio": [ratio_re, ratio_im]});
            }
            v
        }
    };
    let strong = match strong_factor(&b, &bt, tol) {
        Ok(_) => json!({"ok": true, "verdict": "strongly factoring"}),
        Err(e) => {
            let mut v = json!({"ok": false, "verdict": "not strongly factoring", "reason": e.to_string()});
            if let CoreError::NotStronglyFactoring { k, l, first, other } = e {
                v["offending"] = json!({"bin": [k, l], "factors": [first, other]});
            }
            v
        }
    };
    let report = sigma_spectrum(&b, &bt);
    let imag_bad = |im: f64| im.abs() > FACTOR_TOL;
    let nepc = json!({
        "ok": report.nepc_ok,
        "verdict": if report.nepc_ok { "0 <= sigma <= 1" } else { "sigma leaves [0, 1]" },
        "offending": if report.nepc_ok { vec![] } else {
            offending_bins(&report, |re, im| !(-FACTOR_TOL..=1.0 + FACTOR_TOL).contains(&re) || imag_bad(im))
        },
    });
    let cpc = json!({
        "ok": report.cpc_ok,
        "verdict": if report.cpc_ok { "0 <= sigma < 1" } else { "sigma reaches 1 or leaves [0, 1)" },
        "offending": if report.cpc_ok { vec![] } else {
            offending_bins(&report, |re, im| {
                !(-FACTOR_TOL..=1.0 - fixdecomp_core::filters::CPC_MARGIN).contains(&re) || imag_bad(im)
            })
        },
    });
    for (name, requested, v) in [
        ("weak", args.weak, &weak),
        ("strong", args.strong, &strong),
        ("nepc", args.nepc, &nepc),
        ("cpc", args.cpc, &cpc),
    ] {
        if requested && v["ok"] == json!(false) {
            failed.push(name);
        }
    }
    let (n, m) = b.shape();
    let verdict = json!({
        "rows": n,
        "cols": m,
        "members": b.len(),
        "tolerance": tol,
        "requested": {"weak": args.weak, "strong": args.strong, "nepc": args.nepc, "cpc": args.cpc},
        "weak": weak,
        "strong": strong,
        "nepc": nepc,
        "cpc": cpc,
        "sigma": condition_json(&report),
        "ok": failed.is_empty(),
        "failed": failed,
    });
    let text = format!("{}\n", serde_json::to_string_pretty(&verdict).unwrap());
    if args.out.is_some() {
        write_text(&out_dir(&args.out)?.join("verdict.json"), &text)?;
    }
    print!("{text}");
    Ok(if failed.is_empty() { exit::OK } else { exit::CONDITION_FAILED })
}

fn stem(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("bank").to_string()
}

/// Text form: `key=value` header lines, a `p,k,l,re,im` header, then one line per
/// coefficient. Floats use the shortest representation that parses back to the same bits.
pub fn export_text(c: &FbankContainer) -> String {
    let mut s = String::new();
    writeln!(s, "kind={}", c.kind.name()).unwrap();
    writeln!(s, "rows={}\ncols={}\ncount={}", c.rows, c.cols, c.symbols.len()).unwrap();
    for (k, v) in &c.meta {
        writeln!(s, "meta.{k}={v}").unwrap();
    }
    s.push_str("p,k,l,re,im\n");
    for (p, sym) in c.symbols.iter().enumerate() {
        for k in 0..c.rows {
            for l in 0..c.cols {
                let z = sym.at(k, l);
                writeln!(s, "{p},{k},{l},{:?},{:?}", z.re, z.im).unwrap();
            }
        }
    }
    s
}

pub fn import_text(text: &str) -> Result<FbankContainer, String> {
    let mut lines = text.lines().enumerate();
    let (mut kind, mut rows, mut cols, mut count) = (None, None, None, None);
    let mut meta = Vec::new();
    for (i, line) in lines.by_ref() {
        if line == "p,k,l,re,im" {
            break;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected key=value", i + 1))?;
        let num = |v: &str| v.parse::<usize>().map_err(|_| format!("line {}: bad number {v:?}", i + 1));
        match k {
            "kind" => {
                kind = Some(match v {
                    "B" => FbankKind::B,
                    "Btilde" => FbankKind::Btilde,
                    "A" => FbankKind::A,
                    "Y" => FbankKind::Y,
                    _ => return Err(format!("line {}: unknown kind {v:?}", i + 1)),
                })
            }
            "rows" => rows = Some(num(v)?),
            "cols" => cols = Some(num(v)?),
            "count" => count = Some(num(v)?),
            _ => match k.strip_prefix("meta.") {
                Some(key) => meta.push((key.to_string(), v.to_string())),
                None => return Err(format!("line {}: unknown key {k:?}", i + 1)),
            },
        }
    }
    let (Some(kind), Some(rows), Some(cols), Some(count)) = (kind, rows, cols, count) else {
        return Err("header needs kind, rows, cols and count".into());
    };
    if rows == 0 || cols == 0 || count == 0 {
        return Err("degenerate header".into());
    }
    let mut data = vec![vec![fixdecomp_core::C64::new(0.0, 0.0); rows * cols]; count];
    let mut seen = 0usize;
    for (i, line) in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(format!("line {}: expected 5 fields", i + 1));
        }
        let idx = |s: &str| s.parse::<usize>().map_err(|_| format!("line {}: bad index {s:?}", i + 1));
        let val = |s: &str| s.parse::<f64>().map_err(|_| format!("line {}: bad value {s:?}", i + 1));
        let (p, k, l) = (idx(f[0])?, idx(f[1])?, idx(f[2])?);
        if p >= count || k >= rows || l >= cols {
            return Err(format!("line {}: index out of range", i + 1));
        }
        data[p][k * cols + l] = fixdecomp_core::C64::new(val(f[3])?, val(f[4])?);
        seen += 1;
    }
    if seen != rows * cols * count {
        return Err(format!("found {seen} coefficients, header implies {}", rows * cols * count));
    }
    let symbols = data
        .into_iter()
        .map(|d| fixdecomp_core::ComplexGrid::new(rows, cols, d).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    Ok(FbankContainer { kind, rows, cols, meta, symbols })
}

fn export(args: &ExportArgs) -> CliResult<u8> {
    let input = required(&args.input, "--input")?;
    let c = FbankContainer::read(input)?;
    let out = out_dir(&args.out)?;
    let path = out.join(format!("{}.txt", stem(input)));
    write_text(&path, &export_text(&c))?;
    println!("{}", path.display());
    Ok(exit::OK)
}

fn import(args: &ImportArgs) -> CliResult<u8> {
    let input = required(&args.input, "--input")?;
    let text = std::fs::read_to_string(input).map_err(|source| IoError::Io { path: input.to_path_buf(), source })?;
    let c = import_text(&text).map_err(|reason| IoError::CorruptHeader { path: input.to_path_buf(), reason })?;
    let out = out_dir(&args.out)?;
    let path = out.join(format!("{}.fbank", stem(input)));
    c.write(&path)?;
    println!("{}", path.display());
    Ok(exit::OK)
}

fn spectrum(args: &SpectrumArgs) -> CliResult<u8> {
    let (b, bt) = read_pair(&args.b, &args.btilde)?;
    let report = sigma_spectrum(&b, &bt);
    let out = out_dir(&args.out)?;
    let (n, m) = report.sigma.shape();
    let mut csv = String::new();
    for k in 0..n {
        let row: Vec<String> = (0..m).map(|l| format!("{:?}", report.sigma.at(k, l))).collect();
        writeln!(csv, "{}", row.join(",")).unwrap();
    }
    write_text(&out.join("sigma.csv"), &csv)?;
    // σ in [0, 1] maps to the full gray range; values above 1 saturate.
    let heat = RealGrid::from_fn(n, m, |k, l| 255.0 * report.sigma.at(k, l));
    write_file(&out.join("sigma.pgm"), &encode_pgm(&heat))?;
    println!("{}", serde_json::to_string_pretty(&condition_json(&report)).unwrap());
    Ok(exit::OK)
}
