use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDateTime;
use copula_dbn::copula::CopulaPair;
use copula_dbn::dbn::structure_search as search;
use copula_dbn::eval::{
    default_anchor, forecast_horizon, peak_window_eval, run_experiment, train_for_split, write_results_csv, Algorithm,
    ForecastTrace, ResultRow, Window,
};
use copula_dbn::ingest::{
    build_features, clean, parse_csv, write_csv, ColumnMap, Horizon, RecordSeries, SplitSpec, Variable,
};
use copula_dbn::persist::{load_copulas, save_copulas, ModelKind, TrainedModel};
use copula_dbn::seed::derive_seed;
use copula_dbn::synthgen::gen_scenario;
use copula_dbn::transform::{anderson_darling, box_cox, fit_box_cox, jarque_bera, LillieforsNull};
use serde::Serialize;

use crate::config::Pipeline;
use crate::Failure;

type Outcome = Result<(), Failure>;

fn require(path: &Path, produced_by: &str) -> Result<(), Failure> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::usage(format!(
            "missing {}; run `copula-dbn {produced_by}` first or pass its path",
            path.display()
        )))
    }
}

fn create_dir(dir: &Path) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| Failure::usage(format!("cannot create {}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Outcome {
    if let Some(parent) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(path, text).map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_with(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Outcome {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| Failure::usage(format!("cannot format {}: {e}", path.display())))?;
    write_text(path, &String::from_utf8(buf).expect("writers emit UTF-8"))
}

fn load_data(p: &Pipeline) -> Result<RecordSeries, Failure> {
    require(&p.data, "gen")?;
    let report = parse_csv(&p.data, &ColumnMap::default())?;
    for e in report.errors.iter().take(5) {
        log::warn!("{}: skipped {e}", p.data.display());
    }
    if report.errors.len() > 5 {
        log::warn!(
            "{}: {} malformed rows skipped in total",
            p.data.display(),
            report.errors.len()
        );
    }
    let series = clean(&report.series)?;
    series.validate()?;
    Ok(series)
}

fn anchors(p: &Pipeline, series: &RecordSeries) -> Result<Vec<NaiveDateTime>, Failure> {
    if p.anchors.is_empty() {
        Ok(vec![default_anchor(series, p.season, p.horizon)?])
    } else {
        Ok(p.anchors.clone())
    }
}

fn split(p: &Pipeline, anchor: NaiveDateTime) -> SplitSpec {
    SplitSpec {
        season: p.season,
        horizon: p.horizon,
        anchor,
    }
}

fn load_model(path: &Path) -> Result<TrainedModel, Failure> {
    require(path, "train")?;
    Ok(TrainedModel::load(path)?)
}

fn load_pair(path: &Path) -> Result<CopulaPair, Failure> {
    require(path, "fit-copula")?;
    Ok(load_copulas(path)?)
}

fn algorithm_of(model: &TrainedModel) -> Algorithm {
    match model.kind() {
        ModelKind::Dbn if model.with_indicators() => Algorithm::CopulaDbn,
        ModelKind::Dbn => Algorithm::Dbn,
        ModelKind::Mlp => Algorithm::Mlp,
        ModelKind::Elm => Algorithm::Elm,
    }
}

pub fn gen(p: &Pipeline) -> Outcome {
    let series = gen_scenario(&p.scenario)?;
    create_dir(&p.out)?;
    let path = p.out.join("data.csv");
    write_csv(&series, &path)?;
    println!("wrote {} ({} hourly rows)", path.display(), series.len());
    Ok(())
}

pub fn fit_copula(p: &Pipeline) -> Outcome {
    let series = load_data(p)?;
    let anchor = anchors(p, &series)?[0];
    let history = series.before(anchor);
    let pair = CopulaPair::fit(&history, p.settings.p, Some(p.season))?;
    for m in [&pair.temperature, &pair.price] {
        if m.alpha <= 1.0 {
            log::warn!(
                "{}: no positive dependence on load, alpha clamped to 1",
                m.variable_name
            );
        }
    }
    if let Some(parent) = p.copula.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_copulas(&pair, &p.copula)?;
    println!("wrote {}", p.copula.display());
    let mut table = String::from("variable,alpha,tail_upper,var_raw,p,n\n");
    for m in [&pair.temperature, &pair.price] {
        table.push_str(&format!(
            "{},{},{},{},{},{}\n",
            m.variable_name, m.alpha, m.tail_upper, m.var_raw, m.p, m.n
        ));
    }
    print!("{table}");
    write_text(&p.out.join("table2.csv"), &table)
}

pub fn train(p: &Pipeline) -> Outcome {
    let series = load_data(p)?;
    let spec = split(p, anchors(p, &series)?[0]);
    let copulas = if p.algorithm.uses_indicators() {
        Some(load_pair(&p.copula)?)
    } else {
        None
    };
    copula_dbn::ingest::split_seasonal(&series, &spec)?;
    let model = train_for_split(&series, &spec, p.algorithm, copulas.as_ref(), &p.settings)?;
    if let Some(parent) = p.model.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    model.save(&p.model)?;
    println!(
        "wrote {} ({} {:?})",
        p.model.display(),
        p.algorithm,
        model.architecture()
    );
    Ok(())
}

pub fn forecast(p: &Pipeline) -> Outcome {
    let series = load_data(p)?;
    let model = load_model(&p.model)?;
    let copulas = if model.with_indicators() {
        Some(load_pair(&p.copula)?)
    } else {
        None
    };
    let start = match p.start {
        Some(s) => s,
        None => anchors(p, &series)?[0],
    };
    let hours = p.hours.unwrap_or(p.horizon.validation_hours() as usize);
    let trace = forecast_horizon(&model, &series, copulas.as_ref(), start, hours)?;
    write_with(&p.trace, |w| trace.write_csv_writer(w))?;
    let m = trace.metrics(p.settings.hr_tol)?;
    println!(
        "mape {:.4} rmse {:.1} hr {:.3} over {} hours",
        m.mape, m.rmse, m.hr, m.n
    );
    Ok(())
}

fn trace_rows(p: &Pipeline) -> Result<Vec<ResultRow>, Failure> {
    require(&p.trace, "forecast")?;
    let trace = ForecastTrace::read_csv(&p.trace)?;
    let model = load_model(&p.model)?;
    let algorithm = algorithm_of(&model);
    let mut windows = vec![Window::Full];
    if p.horizon == Horizon::WeekAhead {
        windows.push(Window::Peak);
    }
    let mut rows = Vec::new();
    for window in windows {
        let mut metrics = match window {
            Window::Full => trace.metrics(p.settings.hr_tol)?,
            Window::Peak => peak_window_eval(&trace, p.season, p.settings.hr_tol)?,
        };
        metrics.horizon = Some(p.horizon);
        rows.push(ResultRow {
            season: p.season,
            algorithm,
            horizon: p.horizon,
            window,
            metrics,
            seed: p.seed,
            indicators: model.with_indicators(),
        });
    }
    Ok(rows)
}

pub fn evaluate(p: &Pipeline) -> Outcome {
    let rows = if p.algorithms.is_empty() {
        trace_rows(p)?
    } else {
        let series = load_data(p)?;
        let mut rows = Vec::new();
        for anchor in anchors(p, &series)? {
            let out = run_experiment(&series, &split(p, anchor), &p.algorithms, &p.settings)?;
            for run in &out.runs {
                let name = format!("trace-{}-{}-{}.csv", p.season, run.algorithm, anchor.format("%Y%m%d"));
                write_with(&p.out.join(name), |w| run.trace.write_csv_writer(w))?;
            }
            rows.extend(out.rows);
        }
        rows
    };
    for r in &rows {
        println!(
            "{:<10} {:<6} {:<4} mape {:.4} rmse {:.1} hr {:.3}",
            r.algorithm,
            r.season,
            r.window.name(),
            r.metrics.mape,
            r.metrics.rmse,
            r.metrics.hr
        );
    }
    write_with(&p.out.join("results.csv"), |w| write_results_csv(&rows, w))
}

#[derive(Serialize)]
struct SearchReport {
    width: usize,
    depth: usize,
    architecture: Vec<usize>,
    width_scan: Vec<(usize, f64)>,
    depth_scan: Vec<(usize, f64)>,
}

pub fn structure_search(p: &Pipeline) -> Outcome {
    if p.max_width < 2 || p.max_depth < 1 {
        return Err(Failure::usage("max_width must be at least 2 and max_depth at least 1"));
    }
    let series = load_data(p)?;
    let anchor = anchors(p, &series)?[0];
    let flags = if p.indicators {
        Some(load_pair(&p.copula)?.flags_for(&series))
    } else {
        None
    };
    let first = series.first_timestamp().expect("validated series is non-empty");
    let features = build_features(&series, flags.as_deref())?.restrict(first, anchor);
    let found = search(&features, 2..=p.max_width, 1..=p.max_depth, &p.settings.train)?;
    let hidden = found.hidden();
    let report = SearchReport {
        width: found.width,
        depth: found.depth,
        architecture: copula_dbn::dbn::architecture_for(features.width(), &hidden),
        width_scan: found.width_scan.clone(),
        depth_scan: found.depth_scan.clone(),
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_text(&p.out.join("structure.json"), &json)?;
    let mut csv = String::from("phase,width,depth,mape\n");
    for (w, m) in &found.width_scan {
        csv.push_str(&format!("width,{w},1,{m}\n"));
    }
    for (d, m) in &found.depth_scan {
        csv.push_str(&format!("depth,{},{d},{m}\n", found.width));
    }
    write_text(&p.out.join("structure.csv"), &csv)?;
    println!("best architecture {:?}", report.architecture);
    Ok(())
}

pub fn normality_report(p: &Pipeline) -> Outcome {
    let series = load_data(p)?;
    let null = LillieforsNull::simulate(series.len(), p.lilliefors_reps, derive_seed(p.seed, "lilliefors"))?;
    let mut csv = String::from("variable,lambda,shift,p_ad,p_jb,p_lilliefors\n");
    for var in Variable::ALL {
        let values = series.column(var);
        let params = fit_box_cox(
            &values,
            p.boxcox_fraction,
            derive_seed(p.seed, &format!("boxcox/{}", var.name())),
        )?;
        let z = box_cox(&values, &params)?;
        let (ad, jb, lf) = (anderson_darling(&z)?, jarque_bera(&z)?, null.test(&z)?);
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            var.name(),
            params.lambda,
            params.shift,
            ad.p_value,
            jb.p_value,
            lf.p_value
        ));
    }
    print!("{csv}");
    let path = p.out.join("normality.csv");
    write_text(&path, &csv)?;
    std::io::stdout().flush().ok();
    Ok(())
}
