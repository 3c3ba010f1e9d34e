//! Ablation harness: trains the four feature-toggle cells plus the
//! alternative selection strategy on the +both cell, each over a set of
//! seeds, and aggregates test mIoU, confusable-pair confusion, noise score,
//! and descriptor F1.

use std::collections::VecDeque;
use std::sync::Mutex;

use sceneenc::data::{Dataset, Split};
use sceneenc::losses::SelectionStrategy;
use sceneenc::trainer::{evaluate, train, TrainConfig};

use crate::error::CliError;
use crate::svg::{bar_chart, Bar};

/// The four toggle cells; the strategy comparison reuses `Both`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cell {
    Base,
    SceneEncoder,
    Rsl,
    Both,
}

impl Cell {
    pub fn name(self) -> &'static str {
        match self {
            Cell::Base => "base",
            Cell::SceneEncoder => "scene_encoder",
            Cell::Rsl => "rsl",
            Cell::Both => "both",
        }
    }

    fn toggles(self) -> (bool, bool) {
        match self {
            Cell::Base => (false, false),
            Cell::SceneEncoder => (true, false),
            Cell::Rsl => (false, true),
            Cell::Both => (true, true),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunMetrics {
    pub miou: f64,
    pub confusable_rate: f64,
    pub noise: f64,
    pub descriptor_f1: f64,
}

#[derive(Clone, Debug)]
pub struct AblationRow {
    pub cell: Cell,
    pub strategy: SelectionStrategy,
    pub runs: Vec<RunMetrics>,
}

fn mean(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count().max(1) as f64;
    values.sum::<f64>() / n
}

fn stddev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values.iter().copied());
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

impl AblationRow {
    pub fn mean_miou(&self) -> f64 {
        mean(self.runs.iter().map(|r| r.miou))
    }

    pub fn std_miou(&self) -> f64 {
        let v: Vec<f64> = self.runs.iter().map(|r| r.miou).collect();
        stddev(&v)
    }

    pub fn mean_confusable(&self) -> f64 {
        mean(self.runs.iter().map(|r| r.confusable_rate))
    }

    pub fn mean_noise(&self) -> f64 {
        mean(self.runs.iter().map(|r| r.noise))
    }

    pub fn mean_descriptor_f1(&self) -> f64 {
        mean(self.runs.iter().map(|r| r.descriptor_f1))
    }

    fn strategy_name(&self) -> &'static str {
        match self.strategy {
            SelectionStrategy::TopConfidence => "top_confidence",
            SelectionStrategy::Random => "random",
        }
    }
}

pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub seeds: Vec<u64>,
}

impl AblationTable {
    pub fn row(&self, cell: Cell, strategy: SelectionStrategy) -> &AblationRow {
        self.rows
            .iter()
            .find(|r| r.cell == cell && r.strategy == strategy)
            .expect("all five configurations are always trained")
    }

    /// Six result rows: the four cells (top-confidence selection), then the
    /// two strategies on the +both cell. The top-confidence strategy row
    /// re-lists the +both cell: identical config and seeds give identical
    /// results by the determinism contract.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("# reference mIoU (%), full-scale indoor benchmark: base=55.6 scene_encoder=58.6 rsl=58.7 both=62.8\n");
        out.push_str("# reference selection strategies on the combined cell: random=60.2 top_confidence=62.8\n");
        out.push_str("cell,strategy,seeds,mean_miou,std_miou,mean_confusable_rate,mean_noise,mean_descriptor_f1\n");
        let ordered = [
            self.row(Cell::Base, SelectionStrategy::TopConfidence),
            self.row(Cell::SceneEncoder, SelectionStrategy::TopConfidence),
            self.row(Cell::Rsl, SelectionStrategy::TopConfidence),
            self.row(Cell::Both, SelectionStrategy::TopConfidence),
            self.row(Cell::Both, SelectionStrategy::Random),
            self.row(Cell::Both, SelectionStrategy::TopConfidence),
        ];
        for row in ordered {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                row.cell.name(),
                row.strategy_name(),
                row.runs.len(),
                row.mean_miou(),
                row.std_miou(),
                row.mean_confusable(),
                row.mean_noise(),
                row.mean_descriptor_f1()
            ));
        }
        out
    }

    pub fn to_bar_svg(&self) -> String {
        let bars: Vec<Bar> = [
            self.row(Cell::Base, SelectionStrategy::TopConfidence),
            self.row(Cell::SceneEncoder, SelectionStrategy::TopConfidence),
            self.row(Cell::Rsl, SelectionStrategy::TopConfidence),
            self.row(Cell::Both, SelectionStrategy::TopConfidence),
            self.row(Cell::Both, SelectionStrategy::Random),
        ]
        .iter()
        .map(|r| Bar {
            label: format!("{}/{}", r.cell.name(), r.strategy_name()),
            value: r.mean_miou(),
            stddev: r.std_miou(),
        })
        .collect();
        bar_chart("ablation cells (test mIoU)", "mIoU", &bars)
    }
}

struct Job {
    slot: usize,
    cell: Cell,
    strategy: SelectionStrategy,
    seed: u64,
}

/// Train every configuration × seed and evaluate the best-validation
/// checkpoint on the test split. Runs are independent and may execute on
/// worker threads; results are keyed by job index so the outcome does not
/// depend on scheduling.
pub fn run_ablation(
    dataset: &Dataset,
    base: &TrainConfig,
    confusable_pair: Option<(usize, usize)>,
    seeds: &[u64],
    threads: usize,
) -> Result<AblationTable, CliError> {
    let configs: [(Cell, SelectionStrategy); 5] = [
        (Cell::Base, SelectionStrategy::TopConfidence),
        (Cell::SceneEncoder, SelectionStrategy::TopConfidence),
        (Cell::Rsl, SelectionStrategy::TopConfidence),
        (Cell::Both, SelectionStrategy::TopConfidence),
        (Cell::Both, SelectionStrategy::Random),
    ];
    let mut jobs = VecDeque::new();
    for (ci, &(cell, strategy)) in configs.iter().enumerate() {
        for (si, &seed) in seeds.iter().enumerate() {
            jobs.push_back(Job { slot: ci * seeds.len() + si, cell, strategy, seed });
        }
    }
    let total = jobs.len();
    let queue = Mutex::new(jobs);
    let results: Mutex<Vec<Option<Result<RunMetrics, CliError>>>> =
        Mutex::new((0..total).map(|_| None).collect());

    let worker = |queue: &Mutex<VecDeque<Job>>, results: &Mutex<Vec<Option<Result<RunMetrics, CliError>>>>| {
        loop {
            let job = match queue.lock().unwrap().pop_front() {
                Some(j) => j,
                None => return,
            };
            let outcome = run_one(dataset, base, confusable_pair, &job);
            log::info!(
                "ablation {}/{} seed {}: {}",
                job.cell.name(),
                match job.strategy {
                    SelectionStrategy::TopConfidence => "top_confidence",
                    SelectionStrategy::Random => "random",
                },
                job.seed,
                match &outcome {
                    Ok(m) => format!("test mIoU {:.4}", m.miou),
                    Err(e) => format!("failed: {e}"),
                }
            );
            results.lock().unwrap()[job.slot] = Some(outcome);
        }
    };

    let workers = threads.max(1).min(total.max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| worker(&queue, &results));
        }
    });

    let collected = results.into_inner().unwrap();
    let mut per_config: Vec<Vec<RunMetrics>> = vec![Vec::new(); configs.len()];
    for (slot, entry) in collected.into_iter().enumerate() {
        let metrics = entry.expect("every job runs")?;
        per_config[slot / seeds.len()].push(metrics);
    }
    let rows = configs
        .iter()
        .zip(per_config)
        .map(|(&(cell, strategy), runs)| AblationRow { cell, strategy, runs })
        .collect();
    Ok(AblationTable { rows, seeds: seeds.to_vec() })
}

fn run_one(
    dataset: &Dataset,
    base: &TrainConfig,
    confusable_pair: Option<(usize, usize)>,
    job: &Job,
) -> Result<RunMetrics, CliError> {
    let (scene_encoder, rsl) = job.cell.toggles();
    let config = TrainConfig {
        scene_encoder,
        rsl,
        selection: job.strategy,
        seed: job.seed,
        ..base.clone()
    };
    let outcome = train(&config, dataset)?;
    let report = evaluate(&outcome.best_checkpoint, dataset, Split::Test)?;
    let confusable_rate = confusable_pair
        .map(|(a, b)| report.pooled.pair_confusion_rate(a, b))
        .unwrap_or(0.0);
    Ok(RunMetrics {
        miou: report.iou.miou,
        confusable_rate,
        noise: report.noise,
        descriptor_f1: report.descriptor.micro.f1,
    })
}
