use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crop_core::oracle::{gen_zipf_stream, gen_zipf_transactions, ZipfModel};
use crop_core::pairs::{
    bound_ratio_report, mine_transactions, read_fimi, recall_at_k, write_fimi, write_report_csv,
};
use crop_core::sparse::{write_triples, OuterProduct, Side};
use crop_core::{
    derive_seed, exact_pair_supports, exact_product, exact_top, load_column_row_streams, run,
    run_workers, workers_from_text, workers_to_text, CropError, Dims, EngineConfig, Entry,
    EntryFilter, ExactProduct, LoadReport, OuterProductSource, SketchState, SparseVector,
    Transaction, TransactionStream, TripleFiles,
};

use crate::args::{
    BenchArgs, Command, GenerateCommand, InputArgs, MergeArgs, MineArgs, MultiplyArgs, ReplayArgs,
    ReportArgs, TransactionArgs, WorkerArgs, ZipfArgs,
};
use crate::manifest::{digest, RunManifest, SubSeed};
use crate::CliError;

pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Multiply(a) => multiply(&a),
        Command::Mine(a) => mine(&a),
        Command::Bench(a) => bench(&a),
        Command::Generate(GenerateCommand::Zipf(a)) => generate_zipf(&a),
        Command::Generate(GenerateCommand::Transactions(a)) => generate_transactions(&a),
        Command::Report(a) => report(&a),
        Command::Worker(a) => worker(&a),
        Command::Merge(a) => merge(&a),
        Command::Replay(a) => replay(&a),
    }
}

/// Files of one command, held until every computation has succeeded.
struct Outputs {
    dir: PathBuf,
    files: Vec<(&'static str, Vec<u8>)>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: &'static str, bytes: Vec<u8>) {
        self.files.push((name, bytes));
    }

    /// Writes the manifest first, then the results.
    fn commit(self, mut m: RunManifest) -> Result<(), CliError> {
        m.outputs = self.files.iter().map(|(n, _)| n.to_string()).collect();
        fs::create_dir_all(&self.dir).map_err(|e| CropError::io(&self.dir, e))?;
        let write = |name: &str, bytes: &[u8]| -> Result<(), CliError> {
            let path = self.dir.join(name);
            fs::write(&path, bytes).map_err(|e| CropError::io(&path, e).into())
        };
        write(crate::manifest::FILE_NAME, m.to_json().as_bytes())?;
        for (name, bytes) in &self.files {
            write(name, bytes)?;
        }
        Ok(())
    }
}

fn json<T: serde::Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).expect("arguments serialise")
}

fn seconds(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

fn top_csv(state: &SketchState, top: usize, truth: Option<&ExactProduct>) -> Vec<u8> {
    let mut out = Vec::new();
    write_report_csv(&mut out, &state.top_entries(top), truth).expect("in-memory write");
    out
}

fn loads_csv(report: &LoadReport, config: &EngineConfig) -> Result<Vec<u8>, CliError> {
    let parts = config.assignments()?;
    let mut s = String::from("instance,worker,q,r,load\n");
    for (i, inst) in report.per_instance.iter().enumerate() {
        for (c, load) in inst.iter().enumerate() {
            let _ = writeln!(s, "{i},{c},{},{},{load}", parts[c].q(), parts[c].r());
        }
    }
    Ok(s.into_bytes())
}

/// Recall and bound ratios of the reported list against exact weights.
fn quality_files(
    out: &mut Outputs,
    state: &SketchState,
    truth: &ExactProduct,
    top: usize,
) -> Result<(), CliError> {
    let k = top.min(truth.len());
    let oracle_top: Vec<Entry> = exact_top(truth, k).into_iter().map(|(e, _)| e).collect();
    let recall = recall_at_k(state, &oracle_top, k)?;
    let ratios = bound_ratio_report(state, truth, k);

    let mut q = String::from("k,recall,fraction_tight\n");
    let _ = writeln!(q, "{k},{recall},{}", ratios.fraction_tight);
    out.add("quality.csv", q.into_bytes());

    let mut b = String::from(
        "rank,item_i,item_j,true,lower,upper,lower_over_true,upper_over_true,lower_over_upper\n",
    );
    for (rank, r) in ratios.rows.iter().enumerate() {
        let _ = writeln!(
            b,
            "{},{},{},{},{},{},{},{},{}",
            rank + 1,
            r.entry.row,
            r.entry.col,
            r.truth,
            r.lower,
            r.upper,
            r.lower_over_true(),
            r.upper_over_true(),
            r.lower_over_upper()
        );
    }
    out.add("bounds.csv", b.into_bytes());
    Ok(())
}

struct Sketched {
    config: EngineConfig,
    state: SketchState,
    report: LoadReport,
    truth: Option<ExactProduct>,
}

fn finish(mut m: RunManifest, s: Sketched, top: usize, dir: &Path) -> Result<(), CliError> {
    m.set_config(&s.config)?;
    m.set_loads(&s.report);
    let mut out = Outputs::new(dir);
    out.add("top.csv", top_csv(&s.state, top, s.truth.as_ref()));
    out.add("state.txt", s.state.to_text().into_bytes());
    out.add("loads.csv", loads_csv(&s.report, &s.config)?);
    if let Some(truth) = &s.truth {
        quality_files(&mut out, &s.state, truth, top)?;
    }
    out.commit(m)
}

fn multiply(args: &MultiplyArgs) -> Result<(), CliError> {
    let config = args.sketch.config(EntryFilter::All);
    config.validate()?;
    let mut m = RunManifest::new("multiply", json(args));
    m.inputs = vec![digest(&args.a)?, digest(&args.b)?];

    let t = Instant::now();
    let (stream, stats) = load_column_row_streams(&args.a, &args.b)?;
    m.timings_seconds.insert("load".into(), seconds(t));
    m.counts
        .insert("outer_products".into(), stream.len() as u64);
    m.counts
        .insert("product_terms".into(), stream.total_terms());
    m.counts.insert("zeros_dropped".into(), stats.zeros_dropped);

    let t = Instant::now();
    let (state, report) = run(&stream, &config)?;
    m.timings_seconds.insert("sketch".into(), seconds(t));

    let truth = if args.oracle.exact_oracle {
        let t = Instant::now();
        let truth = exact_product(&stream, args.oracle.oracle_cap)?;
        m.timings_seconds.insert("oracle".into(), seconds(t));
        m.counts
            .insert("nonzero_entries".into(), truth.len() as u64);
        Some(truth)
    } else {
        None
    };
    let sketched = Sketched {
        config,
        state,
        report,
        truth,
    };
    finish(m, sketched, args.top, &args.out)
}

fn mine(args: &MineArgs) -> Result<(), CliError> {
    let config = args.sketch.config(EntryFilter::AboveDiagonal);
    config.validate()?;
    let mut m = RunManifest::new("mine", json(args));
    m.inputs = vec![digest(&args.fimi)?];

    let t = Instant::now();
    let (txs, stats) = read_fimi(&args.fimi, args.universe)?;
    let stream = TransactionStream::new(&txs, args.universe)?;
    m.timings_seconds.insert("load".into(), seconds(t));
    let pairs: u64 = txs.iter().map(Transaction::pair_count).sum();
    m.counts.insert("transactions".into(), txs.len() as u64);
    m.counts.insert("items".into(), stream.universe() as u64);
    m.counts.insert("pair_occurrences".into(), pairs);
    m.counts
        .insert("duplicates_removed".into(), stats.duplicates_removed as u64);

    let t = Instant::now();
    let (state, report) = mine_transactions(&stream, &config)?;
    m.timings_seconds.insert("sketch".into(), seconds(t));

    let truth = if args.oracle.exact_oracle {
        if pairs > args.oracle.oracle_cap {
            return Err(CropError::Resource(format!(
                "{pairs} pair occurrences exceed the oracle cap of {}",
                args.oracle.oracle_cap
            ))
            .into());
        }
        let t = Instant::now();
        let truth = exact_pair_supports(&txs);
        m.timings_seconds.insert("oracle".into(), seconds(t));
        m.counts.insert("distinct_pairs".into(), truth.len() as u64);
        Some(truth)
    } else {
        None
    };
    let sketched = Sketched {
        config,
        state,
        report,
        truth,
    };
    finish(m, sketched, args.top, &args.out)
}

/// An input held in memory, so repeated runs do not re-read it.
enum Loaded {
    Triples(crop_core::OuterProducts),
    Transactions(TransactionStream),
}

impl Loaded {
    fn source(&self) -> &dyn OuterProductSource {
        match self {
            Loaded::Triples(s) => s,
            Loaded::Transactions(s) => s,
        }
    }

    fn filter(&self) -> EntryFilter {
        match self {
            Loaded::Triples(_) => EntryFilter::All,
            Loaded::Transactions(_) => EntryFilter::AboveDiagonal,
        }
    }
}

fn input_paths(input: &InputArgs) -> Vec<&Path> {
    [&input.a, &input.b, &input.fimi]
        .into_iter()
        .flatten()
        .map(PathBuf::as_path)
        .collect()
}

fn load_input(input: &InputArgs) -> Result<Loaded, CliError> {
    match (&input.a, &input.b, &input.fimi) {
        (Some(a), Some(b), None) => Ok(Loaded::Triples(load_column_row_streams(a, b)?.0)),
        (None, None, Some(f)) => {
            let (txs, _) = read_fimi(f, input.universe)?;
            Ok(Loaded::Transactions(TransactionStream::new(
                &txs,
                input.universe,
            )?))
        }
        _ => Err(CliError::Usage("give either --a and --b or --fimi".into())),
    }
}

fn bench(args: &BenchArgs) -> Result<(), CliError> {
    let configs: Vec<EngineConfig> = args
        .worker_counts
        .iter()
        .map(|&k| {
            let mut c = EngineConfig::new(args.kappa, k, args.ss_capacity);
            c.instances = args.instances;
            c.seed = args.seed;
            c.threads = Some(k);
            c.validate().map(|_| c)
        })
        .collect::<Result<_, _>>()?;
    let mut m = RunManifest::new("bench", json(args));
    m.inputs = input_paths(&args.input)
        .into_iter()
        .map(digest)
        .collect::<Result<_, _>>()?;
    let loaded = load_input(&args.input)?;

    let mut table = String::from("workers,total,avg,max,max_over_avg,wall_seconds\n");
    let mut loads = String::from("workers,instance,worker,q,r,load\n");
    for mut c in configs {
        c.filter = loaded.filter();
        let t = Instant::now();
        let (_, report) = run(loaded.source(), &c)?;
        let wall = seconds(t);
        let max = report.per_worker().into_iter().max().unwrap_or(0);
        let _ = writeln!(
            table,
            "{},{},{},{max},{},{wall}",
            c.workers,
            report.total(),
            report.expected_load(),
            report.max_over_avg()
        );
        let parts = c.assignments()?;
        for (i, inst) in report.per_instance.iter().enumerate() {
            for (w, load) in inst.iter().enumerate() {
                let _ = writeln!(
                    loads,
                    "{},{i},{w},{},{},{load}",
                    c.workers,
                    parts[w].q(),
                    parts[w].r()
                );
            }
        }
        m.timings_seconds
            .insert(format!("workers_{}", c.workers), wall);
    }
    print!("{table}");
    if let Some(dir) = &args.out {
        let mut out = Outputs::new(dir);
        out.add("bench.csv", table.into_bytes());
        out.add("loads.csv", loads.into_bytes());
        out.commit(m)?;
    }
    Ok(())
}

fn generate_zipf(args: &ZipfArgs) -> Result<(), CliError> {
    let model = ZipfModel::new(args.c, args.z, args.d)?;
    let dims = Dims::new(args.rows, args.cols.unwrap_or(args.rows));
    let seed = derive_seed(args.seed, "generate", 0);
    let t = Instant::now();
    let work = gen_zipf_stream(model, dims, args.outer_count, seed)?;
    let mut m = RunManifest::new("generate-zipf", json(args));
    m.sub_seeds.push(SubSeed {
        label: "generate".into(),
        index: 0,
        seed,
    });
    m.timings_seconds.insert("generate".into(), seconds(t));
    m.counts.insert("entries".into(), work.truth.len() as u64);
    m.counts
        .insert("outer_products".into(), work.stream.len() as u64);

    let mut truth = work.truth.clone();
    truth.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    let mut t_csv = String::from("rank,row,col,weight\n");
    for (rank, (e, w)) in truth.iter().enumerate() {
        let _ = writeln!(t_csv, "{},{},{},{w}", rank + 1, e.row, e.col);
    }

    let triples = |side: Side, dim: usize, pick: fn(&OuterProduct) -> &SparseVector| {
        let mut bytes = Vec::new();
        let pairs = work.stream.pairs();
        write_triples(&mut bytes, side, dim, pairs.len(), pairs.iter().map(pick))
            .expect("in-memory write");
        bytes
    };
    let mut out = Outputs::new(&args.out);
    out.add("a.txt", triples(Side::Columns, dims.rows, |p| &p.a));
    out.add("b.txt", triples(Side::Rows, dims.cols, |p| &p.b));
    out.add("truth.csv", t_csv.into_bytes());
    out.commit(m)
}

fn generate_transactions(args: &TransactionArgs) -> Result<(), CliError> {
    let seed = derive_seed(args.seed, "generate", 0);
    let t = Instant::now();
    let txs = gen_zipf_transactions(args.items, args.transactions, args.z, args.max_len, seed)?;
    let supports = exact_pair_supports(&txs);
    let mut m = RunManifest::new("generate-transactions", json(args));
    m.sub_seeds.push(SubSeed {
        label: "generate".into(),
        index: 0,
        seed,
    });
    m.timings_seconds.insert("generate".into(), seconds(t));
    m.counts.insert("transactions".into(), txs.len() as u64);
    m.counts.insert(
        "pair_occurrences".into(),
        txs.iter().map(Transaction::pair_count).sum(),
    );
    m.counts
        .insert("distinct_pairs".into(), supports.len() as u64);

    let mut fimi = Vec::new();
    write_fimi(&mut fimi, &txs).expect("in-memory write");
    let mut s_csv = String::from("rank,item_i,item_j,support\n");
    for (rank, (e, w)) in exact_top(&supports, supports.len()).iter().enumerate() {
        let _ = writeln!(s_csv, "{},{},{},{w}", rank + 1, e.row, e.col);
    }
    let mut out = Outputs::new(&args.out);
    out.add("transactions.fimi", fimi);
    out.add("supports.csv", s_csv.into_bytes());
    out.commit(m)
}

fn parse_query(q: &str) -> Result<Entry, CliError> {
    let bad = || CliError::Usage(format!("query {q:?} is not ROW,COL"));
    let (r, c) = q.split_once(',').ok_or_else(bad)?;
    let row = r.trim().parse().map_err(|_| bad())?;
    let col = c.trim().parse().map_err(|_| bad())?;
    Ok(Entry::new(row, col))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CropError::io(path, e).into())
}

fn report(args: &ReportArgs) -> Result<(), CliError> {
    let queries: Vec<Entry> = args
        .queries
        .iter()
        .map(|q| parse_query(q))
        .collect::<Result<_, _>>()?;
    let state =
        SketchState::from_text(&read_text(&args.state)?, &args.state.display().to_string())?;
    let bytes = if queries.is_empty() {
        top_csv(&state, args.top, None)
    } else {
        let mut s = String::from("item_i,item_j,lower,upper,cs_estimate\n");
        for e in queries {
            let q = state.query(e);
            let cs = q.cs_estimate.map(|x| x.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{},{cs}", e.row, e.col, q.lower, q.upper);
        }
        s.into_bytes()
    };
    match &args.out {
        Some(path) => fs::write(path, bytes).map_err(|e| CropError::io(path, e))?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(&bytes)
                .map_err(|e| CropError::io("<stdout>", e))?;
        }
    }
    Ok(())
}

fn worker(args: &WorkerArgs) -> Result<(), CliError> {
    let mut config = args.sketch.config(EntryFilter::All);
    config.validate()?;
    let states = match (&args.input.a, &args.input.b, &args.input.fimi) {
        (Some(a), Some(b), None) => {
            run_workers(&TripleFiles::open(a, b)?, &config, &args.worker_index)?
        }
        _ => {
            let loaded = load_input(&args.input)?;
            config.filter = loaded.filter();
            run_workers(loaded.source(), &config, &args.worker_index)?
        }
    };
    let text = workers_to_text(&config.header(), &states);
    fs::write(&args.out, text).map_err(|e| CropError::io(&args.out, e))?;
    Ok(())
}

fn merge(args: &MergeArgs) -> Result<(), CliError> {
    let mut header = None;
    let mut all = Vec::new();
    for path in &args.states {
        let (h, states) = workers_from_text(&read_text(path)?, &path.display().to_string())?;
        match header {
            None => header = Some(h),
            Some(first) if first != h => {
                return Err(CliError::Input(format!(
                    "{} was written with different sketch parameters",
                    path.display()
                )))
            }
            Some(_) => {}
        }
        all.extend(states);
    }
    let header = header.ok_or_else(|| CliError::Usage("no state files given".into()))?;
    let state = SketchState::merge(header, all)?;
    fs::write(&args.out, state.to_text()).map_err(|e| CropError::io(&args.out, e))?;
    Ok(())
}

fn replay(args: &ReplayArgs) -> Result<(), CliError> {
    let m = RunManifest::read(&args.manifest)?;
    for recorded in &m.inputs {
        let now = digest(&recorded.path)?;
        if now != *recorded {
            return Err(CliError::Input(format!(
                "{} changed since the recorded run (sha256 {} != {})",
                recorded.path.display(),
                now.sha256,
                recorded.sha256
            )));
        }
    }
    let bad = |e: serde_json::Error| CliError::Input(format!("{}: {e}", args.manifest.display()));
    match m.command.as_str() {
        "multiply" => {
            let mut a: MultiplyArgs = serde_json::from_value(m.args).map_err(bad)?;
            a.out = args.out.clone();
            multiply(&a)
        }
        "mine" => {
            let mut a: MineArgs = serde_json::from_value(m.args).map_err(bad)?;
            a.out = args.out.clone();
            mine(&a)
        }
        other => Err(CliError::Input(format!(
            "cannot replay a {other:?} manifest"
        ))),
    }
}
