#![no_main]

use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use lvdisc::imaging::CineStudy;
use lvdisc::phantom::{phantom_study, PhantomSpec};
use lvdisc_app::session::{SessionDocument, SessionState};

fn study() -> &'static CineStudy {
    static S: OnceLock<CineStudy> = OnceLock::new();
    S.get_or_init(|| {
        phantom_study(
            &PhantomSpec {
                n_z: 2,
                ..PhantomSpec::default()
            },
            &[],
        )
        .study
    })
}

fuzz_target!(|data: &[u8]| {
    let Ok(doc) = serde_json::from_slice::<SessionDocument>(data) else {
        return;
    };
    let state = SessionState::new([(study().clone(), std::path::PathBuf::from("phantom"))]);
    if state.restore(doc).is_ok() {
        let _ = state.document(&study().id);
    }
});
