use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use anyhow::{bail, Context};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use vulnesis::api;
use vulnesis::service::{NewProject, NewScenario, NewTypology, Settings, TypesAction, Workspace};
use vulnesis_core::geo::{BuildingFilter, Granularity, Metric};
use vulnesis_core::ingest::FieldRecord;
use vulnesis_core::masters::TypeCategory;
use vulnesis_core::typology::{SampleMode, SampleSpec};
use vulnesis_core::{LayerKind, ProjectState, ScenarioMeta, SubTypologyKey};

#[derive(Parser)]
#[command(name = "vulnesis", version, about = "Seismic vulnerability workbench")]
struct Cli {
    /// Directory holding the projects and masters.json
    #[arg(long, env = "VULNESIS_ROOT", global = true, default_value = ".")]
    root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ProjectArg {
    #[arg(long)]
    project: String,
}

#[derive(Subcommand)]
enum Command {
    /// List projects under the root
    List,
    /// Create a project
    Create {
        #[command(flatten)]
        p: ProjectArg,
        #[arg(long)]
        name: String,
        #[arg(long, default_value = "")]
        description: String,
        #[arg(long, default_value = "")]
        author: String,
        /// YYYY-MM-DD, today when absent
        #[arg(long)]
        date: Option<NaiveDate>,
        #[arg(long)]
        cutoff_year: Option<i32>,
    },
    /// Project summary
    Show {
        #[command(flatten)]
        p: ProjectArg,
    },
    /// Import a cadastral CSV
    ImportCadastre {
        #[command(flatten)]
        p: ProjectArg,
        file: PathBuf,
        /// Column mapping, e.g. "dep=DEPTO,anio=YEAR"
        #[arg(long)]
        map: Option<String>,
    },
    /// Type census, reconciliation and master edits
    Types {
        #[command(flatten)]
        p: ProjectArg,
        #[command(subcommand)]
        action: Option<TypesCmd>,
    },
    /// Discovered subtypologies with counts and owners
    Subtypologies {
        #[command(flatten)]
        p: ProjectArg,
    },
    /// Typology management
    Typology {
        #[command(flatten)]
        p: ProjectArg,
        #[command(subcommand)]
        action: TypologyCmd,
    },
    /// Select buildings for field survey
    Sample {
        #[command(flatten)]
        p: ProjectArg,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        value: f64,
        #[arg(long)]
        seed: u64,
        /// Per-typology quota, e.g. T1=5 (repeatable)
        #[arg(long = "override", value_parser = parse_override)]
        overrides: Vec<(String, f64)>,
    },
    /// Write the two field-work reports
    Forms {
        #[command(flatten)]
        p: ProjectArg,
        /// Directory for report_a.csv and report_b.csv
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Upload field data (CSV, or JSON array when the file ends in .json)
    FieldData {
        #[command(flatten)]
        p: ProjectArg,
        file: PathBuf,
    },
    /// Scenarios
    Scenario {
        #[command(flatten)]
        p: ProjectArg,
        #[command(subcommand)]
        action: ScenarioCmd,
    },
    /// Give unsurveyed buildings their typology mean
    Propagate {
        #[command(flatten)]
        p: ProjectArg,
    },
    /// Filtered building list
    Buildings {
        #[command(flatten)]
        p: ProjectArg,
        /// Comma-separated ids
        #[arg(long)]
        ids: Option<String>,
        /// Encuestadas or NO_Encuestadas
        #[arg(long)]
        survey_kind: Option<String>,
        #[arg(long)]
        edited: Option<bool>,
        #[arg(long)]
        typology: Option<String>,
        #[arg(long)]
        vuln_level: Option<String>,
    },
    /// Export a GeoJSON thematic map
    Map {
        #[command(flatten)]
        p: ProjectArg,
        #[arg(long, default_value = "vulnerability")]
        metric: String,
        #[arg(long, default_value = "building")]
        granularity: String,
        #[arg(long)]
        scenario: Option<String>,
        /// Output file; stdout when absent
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Move the project to another workflow state
    State {
        #[command(flatten)]
        p: ProjectArg,
        target: String,
    },
    /// Load a polygon layer
    Cartography {
        #[command(flatten)]
        p: ProjectArg,
        /// Parcels, Blocks or ProjectArea
        #[arg(long)]
        kind: String,
        /// Feature property holding the key
        #[arg(long)]
        key: String,
        file: PathBuf,
    },
    /// Replace scale and/or thresholds from a JSON file
    Scale {
        #[command(flatten)]
        p: ProjectArg,
        file: PathBuf,
    },
    /// Recompute all derived values and clear the stale flag
    Recompute {
        #[command(flatten)]
        p: ProjectArg,
    },
    /// Run the HTTP service
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
    },
}

#[derive(Subcommand)]
enum TypesCmd {
    Register {
        category: TypeCategory,
        code: String,
        #[arg(default_value = "")]
        label: String,
    },
    Alias {
        category: TypeCategory,
        alias: String,
        code: String,
    },
}

#[derive(Subcommand)]
enum TypologyCmd {
    List,
    Create {
        #[arg(long)]
        name: String,
        #[arg(long, default_value = "")]
        description: String,
    },
    Import {
        #[arg(long)]
        master: String,
    },
    Delete {
        #[arg(long)]
        id: String,
    },
    /// Keys as wall/roof/use/state/pre|post
    Assign {
        #[arg(long)]
        id: String,
        keys: Vec<SubTypologyKey>,
    },
    Unassign {
        #[arg(long)]
        id: String,
        keys: Vec<SubTypologyKey>,
    },
}

#[derive(Subcommand)]
enum ScenarioCmd {
    List,
    Add {
        #[arg(long)]
        ag: f64,
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        magnitude: Option<f64>,
        #[arg(long)]
        depth_km: Option<f64>,
        #[arg(long)]
        lat: Option<f64>,
        #[arg(long)]
        lon: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    TotalCount,
    TotalPercent,
    PerTypologyCount,
    PerTypologyPercent,
}

fn parse_override(s: &str) -> Result<(String, f64), String> {
    let (id, v) = s.split_once('=').ok_or("expected TYPOLOGY=VALUE")?;
    Ok((id.trim().to_string(), v.trim().parse().map_err(|_| format!("bad quota {v:?}"))?))
}

fn emit(text: &str) -> anyhow::Result<()> {
    let mut out = io::stdout().lock();
    match writeln!(out, "{text}") {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn print<T: Serialize>(value: &T) -> anyhow::Result<()> {
    emit(&serde_json::to_string_pretty(value)?)
}

fn read(path: &PathBuf) -> anyhow::Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let ws = Workspace::new(&cli.root);
    match cli.command {
        Command::List => print(&ws.list()),
        Command::Create { p, name, description, author, date, cutoff_year } => {
            print(&ws.create(NewProject { id: p.project, name, description, author, date, cutoff_year })?)
        }
        Command::Show { p } => print(&ws.summary(&p.project)?),
        Command::ImportCadastre { p, file, map } => {
            print(&ws.import_cadastre(&p.project, &read(&file)?, map.as_deref())?)
        }
        Command::Types { p, action } => {
            let action = match action {
                None => return print(&ws.types(&p.project)?),
                Some(TypesCmd::Register { category, code, label }) => TypesAction::Register { category, code, label },
                Some(TypesCmd::Alias { category, alias, code }) => TypesAction::Alias { category, alias, code },
            };
            print(&ws.types_action(&p.project, action)?)
        }
        Command::Subtypologies { p } => print(&ws.subtypologies(&p.project)?),
        Command::Typology { p, action } => match action {
            TypologyCmd::List => print(&ws.typologies(&p.project)?),
            TypologyCmd::Create { name, description } => {
                print(&ws.create_typology(&p.project, NewTypology::Named { name, description })?)
            }
            TypologyCmd::Import { master } => {
                print(&ws.create_typology(&p.project, NewTypology::FromMaster { master_id: master })?)
            }
            TypologyCmd::Delete { id } => print(&ws.delete_typology(&p.project, &id)?),
            TypologyCmd::Assign { id, keys } => print(&ws.assign(&p.project, &id, &keys)?),
            TypologyCmd::Unassign { id, keys } => print(&ws.unassign(&p.project, &id, &keys)?),
        },
        Command::Sample { p, mode, value, seed, overrides } => {
            let mode = match mode {
                ModeArg::TotalCount => SampleMode::TotalCount,
                ModeArg::TotalPercent => SampleMode::TotalPercent,
                ModeArg::PerTypologyCount => SampleMode::PerTypologyCount,
                ModeArg::PerTypologyPercent => SampleMode::PerTypologyPercent,
            };
            let spec = SampleSpec { mode, value, overrides: overrides.into_iter().collect::<BTreeMap<_, _>>(), seed };
            print(&ws.sample(&p.project, &spec)?)
        }
        Command::Forms { p, out_dir } => {
            let forms = ws.field_forms(&p.project)?;
            fs::create_dir_all(&out_dir)?;
            fs::write(out_dir.join("report_a.csv"), &forms.report_a)?;
            fs::write(out_dir.join("report_b.csv"), &forms.report_b)?;
            println!("{}", out_dir.join("report_a.csv").display());
            println!("{}", out_dir.join("report_b.csv").display());
            Ok(())
        }
        Command::FieldData { p, file } => {
            let bytes = read(&file)?;
            let report = if file.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
                let records: Vec<FieldRecord> = serde_json::from_slice(&bytes).context("parsing field records")?;
                ws.field_data_json(&p.project, records)?
            } else {
                ws.field_data_csv(&p.project, &bytes)?
            };
            print(&report)
        }
        Command::Scenario { p, action } => match action {
            ScenarioCmd::List => print(&ws.scenarios(&p.project)?),
            ScenarioCmd::Add { ag, name, magnitude, depth_km, lat, lon } => {
                let meta = (magnitude.is_some() || depth_km.is_some() || lat.is_some() || lon.is_some())
                    .then_some(ScenarioMeta { hypocenter_lat: lat, hypocenter_lon: lon, depth_km, magnitude });
                print(&ws.define_scenario(&p.project, NewScenario { name, ag, meta })?)
            }
        },
        Command::Propagate { p } => print(&ws.propagate(&p.project)?),
        Command::Buildings { p, ids, survey_kind, edited, typology, vuln_level } => {
            let mut q = std::collections::HashMap::new();
            for (k, v) in
                [("ids", ids), ("survey_kind", survey_kind), ("typology", typology), ("vuln_level", vuln_level)]
            {
                if let Some(v) = v {
                    q.insert(k.to_string(), v);
                }
            }
            if let Some(e) = edited {
                q.insert("edited".to_string(), e.to_string());
            }
            let filter: BuildingFilter =
                api::filter_from_query(&q).map_err(|e| anyhow::anyhow!("{}: {}", e.code, e.message))?;
            print(&ws.buildings(&p.project, &filter)?)
        }
        Command::Map { p, metric, granularity, scenario, out } => {
            let metric = Metric::parse(&metric, scenario.as_deref())?;
            let granularity: Granularity = granularity.parse()?;
            let text = ws.map(&p.project, &metric, granularity)?;
            match out {
                Some(path) => fs::write(&path, text).with_context(|| format!("writing {}", path.display())),
                None => emit(&text),
            }
        }
        Command::State { p, target } => {
            let target: ProjectState = target.parse()?;
            print(&ws.transition(&p.project, target)?)
        }
        Command::Cartography { p, kind, key, file } => {
            let kind: LayerKind = kind.parse()?;
            let text = String::from_utf8(read(&file)?).context("layer must be UTF-8")?;
            print(&ws.cartography(&p.project, kind, &key, &text)?)
        }
        Command::Scale { p, file } => {
            let settings: Settings = serde_json::from_slice(&read(&file)?).context("parsing settings")?;
            print(&ws.settings(&p.project, &settings)?)
        }
        Command::Recompute { p } => print(&ws.recompute(&p.project)?),
        Command::Serve { bind } => {
            if !cli.root.is_dir() {
                bail!("root {} is not a directory", cli.root.display());
            }
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener =
                    tokio::net::TcpListener::bind(&bind).await.with_context(|| format!("BindFailure: {bind}"))?;
                eprintln!("listening on http://{}", listener.local_addr()?);
                api::serve(listener, ws).await?;
                Ok(())
            })
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        match e.downcast_ref::<vulnesis_core::Error>() {
            Some(core) => eprintln!("error: {}: {core}", core.code()),
            None => eprintln!("error: {e:#}"),
        }
        std::process::exit(1);
    }
}
