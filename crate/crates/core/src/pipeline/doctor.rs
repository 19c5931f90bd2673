use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{RunConfig, ServiceMode};
use crate::collection::load_taxonomy;
use crate::media::{AutoToolkit, MediaToolkit};
use crate::services::{FixtureTables, HttpServiceClient};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DoctorReport {
    pub checks: Vec<Check>,
}

impl DoctorReport {
    pub fn all_ok(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }

    fn push(&mut self, name: impl Into<String>, result: Result<String, String>) {
        let (ok, detail) = match result {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        self.checks.push(Check {
            name: name.into(),
            ok,
            detail,
        });
    }

    pub fn render(&self) -> String {
        self.checks
            .iter()
            .map(|c| format!("[{}] {}: {}\n", if c.ok { " ok " } else { "FAIL" }, c.name, c.detail))
            .collect()
    }
}

fn writable(dir: &Path) -> Result<String, String> {
    fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let probe = dir.join(".doctor-probe");
    fs::write(&probe, b"ok").map_err(|e| format!("cannot write in {}: {e}", dir.display()))?;
    let _ = fs::remove_file(&probe);
    Ok(format!("{} is writable", dir.display()))
}

/// An empty probe body is expected to be rejected as a bad request; missing
/// routes, auth failures and server errors are not.
fn endpoint_answers(code: u16) -> bool {
    code < 500 && !matches!(code, 401 | 403 | 404 | 405)
}

/// Checks the media toolkit, inputs, service endpoints and workdir. Never fails;
/// problems show up as red entries.
pub fn doctor(config: &RunConfig, workdir: &Path, toolkit: &dyn MediaToolkit) -> DoctorReport {
    let mut report = DoctorReport::default();
    report.push(format!("media toolkit ({})", toolkit.name()), toolkit.check().map_err(|e| e.to_string()));
    report.push(
        "taxonomy",
        load_taxonomy(&config.inputs.taxonomy)
            .map(|t| format!("{} knowledge points", t.points().len()))
            .map_err(|e| e.to_string()),
    );
    let media = &config.inputs.media_dir;
    report.push(
        "media directory",
        if media.is_dir() {
            Ok(media.display().to_string())
        } else {
            Err(format!("{} is not a directory", media.display()))
        },
    );
    match config.services.mode {
        ServiceMode::Mock => report.push(
            "services (mock)",
            match &config.services.fixtures {
                Some(dir) => FixtureTables::load(dir)
                    .map(|t| format!("{} transcripts, {} captions, {} ocr entries", t.transcripts.len(), t.captions.len(), t.ocr.len()))
                    .map_err(|e| e.to_string()),
                None => Err("services.fixtures is not set".into()),
            },
        ),
        ServiceMode::Http => match &config.services.base_url {
            Some(url) => {
                let client = HttpServiceClient::new(url.clone(), config.services.token.clone());
                for (endpoint, status) in client.probe_endpoints() {
                    let result = match status {
                        Ok(code) if endpoint_answers(code) => Ok(format!("{url}{endpoint} answered {code}")),
                        Ok(code) => Err(format!("{url}{endpoint} answered {code}")),
                        Err(e) => Err(format!("{url}{endpoint}: {e}")),
                    };
                    report.push(format!("service {endpoint}"), result);
                }
            }
            None => report.push("services (http)", Err("services.base_url is not set".into())),
        },
    }
    report.push("workdir", writable(workdir));
    report
}

/// Doctor with the default toolkit.
pub fn doctor_default(config: &RunConfig, workdir: &Path) -> DoctorReport {
    doctor(config, workdir, &AutoToolkit::default())
}
