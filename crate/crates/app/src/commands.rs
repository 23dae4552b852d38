use std::path::Path;
use std::sync::Arc;

use anyhow::Context;
use lvdisc::cardiac::{overlay_png, segment_study, StudyReport};
use lvdisc::imaging::load_study;
use lvdisc::locate::Template;
use lvdisc::phantom::{lv_template, phantom_study, write_fixture, PhantomSpec};

use crate::api::{router, AppState};
use crate::cli::{load_config, PhantomArgs, RunConfig, ServeArgs};
use crate::session::{SessionDocument, SessionState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FATAL: i32 = 1;
pub const EXIT_SLICE_FAILURES: i32 = 2;

/// Runs the pipeline over one study; returns the report and the exit code
/// it maps to.
pub fn cmd_segment(cfg: &RunConfig) -> anyhow::Result<(StudyReport, i32)> {
    let study = load_study(&cfg.input, &cfg.study)
        .with_context(|| format!("--input {}", cfg.input.display()))?;
    let template = Template::load(&cfg.template)
        .with_context(|| format!("--template {}", cfg.template.display()))?;
    log::info!(
        "study {} ({}x{}, {} slices, {} frames), template {}x{} r={:.1}",
        study.id,
        study.width(),
        study.height(),
        study.n_z(),
        study.n_phase(),
        template.width(),
        template.height(),
        template.lv_radius()
    );
    let report = segment_study(&study, &template, &cfg.pipeline, &cfg.seeds);

    std::fs::create_dir_all(&cfg.out).with_context(|| format!("--out {}", cfg.out.display()))?;
    let report_path = cfg.out.join("report.json");
    std::fs::write(&report_path, report.to_json())
        .with_context(|| format!("writing {}", report_path.display()))?;
    if cfg.overlays {
        let dir = cfg.out.join("overlays");
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        for r in &report.slices {
            let t = study.phase_index(r.phase);
            let img = study.slice(r.z, t).expect("report covers the study");
            let png = overlay_png(
                img,
                &r.contour(cfg.pipeline.contour_points),
                study.label(r.z, t),
            );
            let p = dir.join(format!("z{:02}_{}.png", r.z, r.phase));
            std::fs::write(&p, png).with_context(|| format!("writing {}", p.display()))?;
        }
    }

    print_summary(&report, &report_path);
    let code = if report.has_failures() {
        eprintln!("{} slice(s) failed:", report.failures.len());
        for f in &report.failures {
            let msg = report
                .slice(f.z, f.phase)
                .and_then(|s| s.message.as_deref())
                .unwrap_or("");
            eprintln!("  z={} {} {}: {msg}", f.z, f.phase, status_str(f.status));
        }
        EXIT_SLICE_FAILURES
    } else {
        EXIT_OK
    };
    Ok((report, code))
}

fn status_str(s: lvdisc::cardiac::SliceStatus) -> String {
    serde_json::to_value(s)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn print_summary(r: &StudyReport, path: &Path) {
    let v = &r.volumes;
    let ef = v
        .ef_percent
        .map_or("undefined".to_string(), |e| format!("{e:.2}%"));
    println!("study      {}", r.study_id);
    println!("EDV        {:.1} ml", v.edv_mm3 / 1000.0);
    println!("ESV        {:.1} ml", v.esv_mm3 / 1000.0);
    println!("EF         {ef}");
    if let Some(t) = r.truth.as_ref().and_then(|t| t.ef_percent) {
        println!("EF (label) {t:.2}%");
    }
    if let Some(m) = &r.metrics {
        println!("Dice       {:.4} (pooled)", m.all.pooled.dice);
    }
    if v.esv_exceeds_edv {
        println!("warning: ESV exceeds EDV");
    }
    println!("report     {}", path.display());
}

pub fn cmd_phantom(a: &PhantomArgs) -> anyhow::Result<()> {
    let spec = PhantomSpec {
        seed: a.seed,
        ..PhantomSpec::default()
    };
    let ph = phantom_study(&spec, &a.noise_slices);
    write_fixture(&ph, &a.out).with_context(|| format!("--out {}", a.out.display()))?;
    println!(
        "wrote {} (analytic EF {:.2}%)",
        a.out.display(),
        ph.analytic_ef()
    );
    Ok(())
}

/// Loads studies and sessions for [`cmd_serve`].
pub fn build_state(a: &ServeArgs) -> anyhow::Result<AppState> {
    let opts = a.study.options();
    let mut studies = Vec::new();
    for p in &a.input {
        let s = load_study(p, &opts).with_context(|| format!("--input {}", p.display()))?;
        log::info!("loaded {} from {}", s.id, p.display());
        studies.push((s, p.clone()));
    }
    let template = match &a.template {
        Some(p) => Template::load(p).with_context(|| format!("--template {}", p.display()))?,
        None => lv_template(32),
    };
    let session = SessionState::new(studies);
    if a.resume {
        let ids: Vec<String> = session.studies().map(|s| s.id.clone()).collect();
        for id in ids {
            let path = SessionState::session_path(&a.out, &id);
            if path.is_file() {
                let text = std::fs::read_to_string(&path)
                    .with_context(|| format!("reading {}", path.display()))?;
                let doc: SessionDocument = serde_json::from_str(&text)
                    .with_context(|| format!("parsing {}", path.display()))?;
                let n = session
                    .restore(doc)
                    .with_context(|| format!("restoring {}", path.display()))?;
                log::info!("resumed {n} result(s) for {id}");
            }
        }
    }
    Ok(AppState {
        session,
        template,
        config: load_config(a.config.as_ref())?,
        out_dir: a.out.clone(),
    })
}

pub fn cmd_serve(a: &ServeArgs) -> anyhow::Result<()> {
    let state = Arc::new(build_state(a)?);
    let mut app = router(state);
    if let Some(dir) = &a.static_dir {
        app = app.fallback_service(tower_http::services::ServeDir::new(dir));
    }
    let addr = std::net::SocketAddr::new(a.host, a.port);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        println!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
