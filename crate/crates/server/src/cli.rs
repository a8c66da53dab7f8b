//! Operator commands: seed the registry, print slot calendars, serve the
//! API, and run simulations.

use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration as StdDuration;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use wavesched_core::clinic::{Clinic, ClinicConfig, Clock, SystemClock};
use wavesched_core::ids::{DoctorId, SpecialtyId};
use wavesched_core::records::{DoctorRecord, Specialty};
use wavesched_core::registry::Principal;
use wavesched_core::sim::{self, ReportFormat, SimConfig};
use wavesched_core::store::FileStore;
use wavesched_core::template::{generate_slots, intervals_on, WaveTemplate, WeeklyHours};
use wavesched_core::SchedError;

use crate::api::{self, AppState};
use crate::webhook;

#[derive(Debug, Parser)]
#[command(name = "wavesched", version, about = "Modified-wave clinic scheduler")]
pub struct Cli {
    /// Directory holding the registry journal.
    #[arg(long, env = "MASS_DATA_DIR", default_value = "data", global = true)]
    pub data_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load doctors, specialties and doctor logins from a JSON fixture.
    Seed {
        #[arg(long)]
        fixture: PathBuf,
    },
    /// Run the HTTP API.
    Serve(ServeArgs),
    /// Print one doctor's generated slots for a date.
    Slots {
        #[arg(long)]
        doctor: String,
        #[arg(long)]
        date: NaiveDate,
        #[command(flatten)]
        template: TemplateArgs,
    },
    /// Run one simulation and print its report.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "table")]
        format: ReportFormat,
    },
    /// Run a baseline and a treatment over common seeds and compare.
    Compare {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        treatment: PathBuf,
        #[arg(long, default_value_t = 1)]
        reps: u32,
        /// Overrides the seed of both configs.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "table")]
        format: ReportFormat,
    },
}

#[derive(Debug, Clone, Args)]
pub struct TemplateArgs {
    #[arg(long)]
    pub slot_length: Option<u32>,
    #[arg(long)]
    pub wave_size: Option<u32>,
    #[arg(long)]
    pub catchup: Option<u32>,
}

impl TemplateArgs {
    pub fn template(&self) -> Result<WaveTemplate, CliError> {
        let d = WaveTemplate::default();
        let t = WaveTemplate {
            slot_length: self.slot_length.unwrap_or(d.slot_length),
            wave_size: self.wave_size.unwrap_or(d.wave_size),
            catchup_window: self.catchup.unwrap_or(d.catchup_window),
            hour_length: d.hour_length,
        };
        t.validate()?;
        Ok(t)
    }
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    /// Post due notifications to this URL.
    #[arg(long)]
    pub webhook: Option<String>,
    /// Seconds between notification dispatch rounds.
    #[arg(long, default_value_t = 5)]
    pub dispatch_every: u64,
    #[command(flatten)]
    pub template: TemplateArgs,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    /// 1 for bad input, 2 for I/O and storage failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl From<SchedError> for CliError {
    fn from(e: SchedError) -> Self {
        match e {
            SchedError::Storage(m) => CliError::Io(m),
            e => CliError::Validation(e.to_string()),
        }
    }
}

impl From<sim::SimError> for CliError {
    fn from(e: sim::SimError) -> Self {
        CliError::Validation(e.to_string())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(|e| CliError::Io(format!("stdout: {e}")))
}

/// Parses JSON, reporting the line, column and field path of a failure.
pub fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        let at = format!("{}:{}:{}", path.display(), inner.line(), inner.column());
        if field == "." {
            CliError::Validation(format!("{at}: {inner}"))
        } else {
            CliError::Validation(format!("{at}: field `{field}`: {inner}"))
        }
    })
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn open_clinic(data_dir: &Path, config: ClinicConfig) -> Result<Clinic, CliError> {
    std::fs::create_dir_all(data_dir).map_err(|e| io_err(data_dir, e))?;
    let store = FileStore::open_dir(data_dir).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(Clinic::open(config, Box::new(store))?)
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Seed { fixture } => cmd_seed(&cli.data_dir, &fixture, ClinicConfig::default(), out).map(drop),
        Command::Slots { doctor, date, template } => {
            cmd_slots(&cli.data_dir, &DoctorId(doctor), date, &template.template()?, out).map(drop)
        }
        Command::Simulate { config, seed, format } => cmd_simulate(&config, seed, format, out),
        Command::Compare { baseline, treatment, reps, seed, format } => {
            cmd_compare(&baseline, &treatment, reps, seed, format, out)
        }
        Command::Serve(args) => cmd_serve(&cli.data_dir, args),
    }
}

// ---- seed

/// One fixture entry: a doctor record plus an optional display name for its
/// specialty and an optional login.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureDoctor {
    pub doctor_id: DoctorId,
    pub name: String,
    pub specialty_id: SpecialtyId,
    #[serde(default)]
    pub specialty_name: Option<String>,
    #[serde(default)]
    pub working_hours: Vec<WeeklyHours>,
    #[serde(default = "on_duty")]
    pub on_duty: bool,
    #[serde(default)]
    pub username: Option<String>,
    #[serde(default)]
    pub password: Option<String>,
}

fn on_duty() -> bool {
    true
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct SeedSummary {
    pub specialties: usize,
    pub doctors: usize,
    pub logins: usize,
}

pub fn cmd_seed(data_dir: &Path, fixture: &Path, config: ClinicConfig, out: &mut dyn Write) -> Result<SeedSummary, CliError> {
    let text = read(fixture)?;
    let entries: Vec<FixtureDoctor> = if text.trim().is_empty() {
        Vec::new()
    } else {
        parse_json(fixture, &text)?
    };
    for (i, e) in entries.iter().enumerate() {
        if e.username.is_some() != e.password.is_some() {
            return Err(CliError::Validation(format!(
                "{}: entry {i} ({}): username and password must be given together",
                fixture.display(),
                e.doctor_id
            )));
        }
    }
    let clinic = open_clinic(data_dir, config)?;
    let mut summary = SeedSummary::default();
    let mut seen = std::collections::BTreeSet::new();
    for (i, e) in entries.into_iter().enumerate() {
        let ctx = |err: SchedError| match err {
            SchedError::Storage(m) => CliError::Io(m),
            err => CliError::Validation(format!("{}: entry {i} ({}): {err}", fixture.display(), e.doctor_id)),
        };
        if let Some(name) = &e.specialty_name {
            clinic
                .upsert_specialty(Specialty { specialty_id: e.specialty_id.clone(), name: name.clone() })
                .map_err(ctx)?;
        }
        seen.insert(e.specialty_id.clone());
        clinic
            .upsert_doctor(DoctorRecord {
                doctor_id: e.doctor_id.clone(),
                name: e.name.clone(),
                specialty_id: e.specialty_id.clone(),
                working_hours: e.working_hours.clone(),
                on_duty: e.on_duty,
            })
            .map_err(ctx)?;
        summary.doctors += 1;
        if let (Some(user), Some(pass)) = (&e.username, &e.password) {
            match clinic.register_doctor_login(&e.doctor_id, user, pass) {
                Ok(()) => summary.logins += 1,
                // re-seeding the same fixture is a no-op for existing logins
                Err(SchedError::UsernameTaken) => {
                    let same = clinic
                        .authenticate(user, pass, chrono::Utc::now())
                        .is_ok_and(|s| s.principal == Principal::Doctor(e.doctor_id.clone()));
                    if !same {
                        return Err(ctx(SchedError::UsernameTaken));
                    }
                }
                Err(err) => return Err(ctx(err)),
            }
        }
    }
    summary.specialties = seen.len();
    write_out(
        out,
        &format!(
            "specialties: {}\ndoctors: {}\nlogins: {}\n",
            summary.specialties, summary.doctors, summary.logins
        ),
    )?;
    Ok(summary)
}

// ---- slots

pub fn cmd_slots(
    data_dir: &Path,
    doctor: &DoctorId,
    date: NaiveDate,
    template: &WaveTemplate,
    out: &mut dyn Write,
) -> Result<usize, CliError> {
    let clinic = open_clinic(data_dir, ClinicConfig::default())?;
    let record = clinic.doctor(doctor)?;
    let slots = generate_slots(doctor, &intervals_on(&record.working_hours, date), template)?;
    let mut text = format!("{:<6}  {:>3}  {:<4}  {:>8}  slot_id\n", "time", "pos", "kind", "duration");
    for s in &slots {
        let kind = if s.hour_position == 0 { "wave" } else { "seq" };
        text.push_str(&format!(
            "{:<6}  {:>3}  {:<4}  {:>8}  {}\n",
            s.start.format("%H:%M"),
            s.hour_position,
            kind,
            s.duration,
            s.slot_id
        ));
    }
    write_out(out, &text)?;
    Ok(slots.len())
}

// ---- simulate / compare

fn load_sim(path: &Path, seed: Option<u64>) -> Result<SimConfig, CliError> {
    let mut config: SimConfig = parse_json(path, &read(path)?)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

pub fn cmd_simulate(path: &Path, seed: Option<u64>, format: ReportFormat, out: &mut dyn Write) -> Result<(), CliError> {
    let config = load_sim(path, seed)?;
    let report = sim::run(&config)?;
    write_out(out, &sim::emit_report(&report, format))
}

pub fn cmd_compare(
    baseline: &Path,
    treatment: &Path,
    reps: u32,
    seed: Option<u64>,
    format: ReportFormat,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let b = load_sim(baseline, seed)?;
    let t = load_sim(treatment, seed)?;
    let cmp = sim::compare(&b, &t, reps)?;
    write_out(out, &sim::emit_comparison(&cmp, format))
}

// ---- serve

fn cmd_serve(data_dir: &Path, args: ServeArgs) -> Result<(), CliError> {
    let config = ClinicConfig {
        template: args.template.template()?,
        ..Default::default()
    };
    let clinic = Arc::new(open_clinic(data_dir, config)?);
    let clock: Arc<dyn Clock> = Arc::new(SystemClock);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(format!("runtime: {e}")))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(args.listen)
            .await
            .map_err(|e| CliError::Io(format!("bind {}: {e}", args.listen)))?;
        tracing::info!("listening on {}", args.listen);
        let every = StdDuration::from_secs(args.dispatch_every.max(1));
        let dispatcher = tokio::spawn(webhook::dispatch_loop(clinic.clone(), clock.clone(), args.webhook, every));
        let app = api::router(AppState::new(clinic, clock));
        let served = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await;
        dispatcher.abort();
        served.map_err(|e| CliError::Io(format!("server: {e}")))
    })
}
