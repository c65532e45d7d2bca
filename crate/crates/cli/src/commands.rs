use std::path::Path;

use optrisk_core::cash::{check_cash_additive_at, check_cash_subadditive, check_zcb_calibration, CASH_PROBES};
use optrisk_core::consistency::{
    bubble_profile, check_stability, check_time_consistent, doob_riesz, maximal_inequality, ConsistencyVerdict,
    MaximalMode, Membership, Property, Status,
};
use optrisk_core::io::{from_json, DisintegrationFile, MeasureFile, RiskDoc, TermFile, TreeFile};
use optrisk_core::measure::{self, compose};
use optrisk_core::tree::{AdaptedProcess, EventTree};
use optrisk_core::{Error, ProductMeasure, RiskMeasureSpec};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{CheckArgs, DecomposeArgs, EvalArgs, Format};
use crate::report::{node_rows, Failure, Output, Row};

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))
}

fn parse<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    from_json(&read(path)?).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load_tree(path: &Path) -> Result<(TreeFile, EventTree), Failure> {
    let file: TreeFile = parse(path)?;
    let tree = file.build()?;
    Ok((file, tree))
}

fn load_risk(path: &Path, tree: &EventTree) -> Result<RiskMeasureSpec, Failure> {
    Ok(parse::<RiskDoc>(path)?.build(tree)?)
}

fn load_measure(path: &Path, tree: &EventTree) -> Result<ProductMeasure, Failure> {
    Ok(parse::<MeasureFile>(path)?.build(tree)?)
}

fn required<'a, T: ?Sized>(value: Option<&'a T>, flag: &str, property: &str) -> Result<&'a T, Failure> {
    value.ok_or_else(|| Failure::Input(format!("--{flag} is required for {property}")))
}

#[derive(Serialize)]
struct EvalReport<'a> {
    risk: &'static str,
    process: &'a str,
    rows: Vec<Row>,
}

pub fn eval(a: &EvalArgs) -> Result<Output, Failure> {
    let (file, tree) = load_tree(&a.common.tree)?;
    let x = file.process(&tree, &a.process)?;
    let rm = load_risk(&a.risk, &tree)?;
    let rho = rm.evaluate_all(&tree, &x)?;
    let rows = node_rows(&tree, "rho", rho.values().iter().map(|v| Some(*v)));
    let report = EvalReport { risk: rm.kind(), process: &a.process, rows: rows.clone() };
    Output::rows(a.common.format, &report, &rows, true)
}

#[derive(Serialize)]
struct DecomposeReport {
    #[serde(flatten)]
    factors: DisintegrationFile,
    /// Largest `|compose(decompose(Z)) - Z|` where `Z > 0`.
    residual: f64,
}

pub fn decompose(a: &DecomposeArgs) -> Result<Output, Failure> {
    let (_, tree) = load_tree(&a.common.tree)?;
    let q = load_measure(&a.measure, &tree)?;
    let dis = measure::decompose(&tree, &q)?;
    let back = compose(&tree, &dis.m, &dis.gamma)?;
    let z = q.density().values();
    let residual = z
        .iter()
        .zip(back.density().values())
        .filter(|(z, _)| **z > 0.0)
        .map(|(z, b)| (z - b).abs())
        .fold(0.0, f64::max);
    let passed = residual <= a.common.tol;
    if !passed {
        return Err(Failure::Eval(format!("round-trip residual {residual:e} exceeds {:e}", a.common.tol)));
    }
    let mut rows = node_rows(&tree, "M", dis.m.values().iter().map(|v| Some(*v)));
    rows.extend(node_rows(&tree, "D", dis.d.values().iter().map(|v| Some(*v))));
    rows.extend(node_rows(&tree, "gamma", dis.gamma.values().iter().map(|v| Some(*v))));
    let report = DecomposeReport { factors: DisintegrationFile::from_measure(&tree, &q)?, residual };
    Output::rows(a.common.format, &report, &rows, true)
}

const PROPERTIES: [&str; 11] = [
    "time-consistency",
    "acceptance",
    "rejection",
    "weak",
    "cash-subadditivity",
    "cash-additivity",
    "calibration",
    "maximal-inequality",
    "doob-riesz",
    "bubble-profile",
    "stability",
];

#[derive(Serialize)]
struct CheckReport {
    property: String,
    status: Status,
    counterexample: Option<Value>,
    tolerance: f64,
    seed: u64,
    budget: usize,
    details: Value,
}

struct Verdict {
    passed: bool,
    counterexample: Option<Value>,
    details: Value,
    rows: Option<Vec<Row>>,
}

impl Verdict {
    fn new<T: Serialize>(passed: bool, counterexample: Option<Value>, details: &T) -> Self {
        Verdict { passed, counterexample, details: to_value(details), rows: None }
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn consistency(v: ConsistencyVerdict) -> Verdict {
    let details = json!({ "kind": v.property, "test": v.test, "probes": v.probes });
    Verdict::new(v.status == Status::Pass, v.counterexample.as_ref().map(to_value), &details)
}

fn optional_rows(tree: &EventTree, quantity: &'static str, values: &[Option<f64>]) -> Vec<Row> {
    node_rows(tree, quantity, values.iter().copied())
}

pub fn check(a: &CheckArgs) -> Result<Output, Failure> {
    let property = a.property.as_str();
    if !PROPERTIES.contains(&property) {
        return Err(Failure::Input(format!("unknown property `{property}`; expected one of {}", PROPERTIES.join(", "))));
    }
    if a.common.format == Format::Csv && !matches!(property, "doob-riesz" | "bubble-profile") {
        return Err(Failure::Input(format!("--format csv is not available for {property}")));
    }
    let c = &a.common;
    let (file, tree) = load_tree(&c.tree)?;
    let risk = || load_risk(required(a.risk.as_deref(), "risk", property)?, &tree);
    let process = || -> Result<AdaptedProcess, Failure> {
        Ok(file.process(&tree, required(a.process.as_deref(), "process", property)?)?)
    };
    let single_measure = || -> Result<ProductMeasure, Failure> {
        match a.measure.as_slice() {
            [m] => load_measure(m, &tree),
            _ => Err(Failure::Input(format!("{property} takes exactly one --measure"))),
        }
    };

    let verdict = match property {
        "time-consistency" | "acceptance" | "rejection" | "weak" => {
            let kind = match property {
                "time-consistency" => Property::Strong,
                "acceptance" => Property::Acceptance,
                "rejection" => Property::Rejection,
                _ => Property::WeakAcceptance,
            };
            consistency(check_time_consistent(&risk()?, &tree, kind, c.budget, c.seed, c.tol)?)
        }
        "cash-subadditivity" => {
            let (rm, x) = (risk()?, process()?);
            let s = a.s.unwrap_or(1);
            let atoms = tree.nodes_at(a.t.min(tree.horizon())).len();
            let mut reports = Vec::new();
            let mut counterexample = None;
            for m in CASH_PROBES {
                let rep = check_cash_subadditive(&rm, &tree, &x, a.t, s, &vec![m; atoms])?;
                if !rep.passed && counterexample.is_none() {
                    counterexample = Some(json!({ "m": m, "lhs": rep.lhs, "rhs": rep.rhs }));
                }
                reports.push(json!({ "m": m, "report": rep }));
            }
            Verdict::new(counterexample.is_none(), counterexample, &reports)
        }
        "cash-additivity" => {
            let s = a.s.unwrap_or(a.t + 1);
            let rep = check_cash_additive_at(&risk()?, &tree, a.t, s, c.budget, c.seed)?;
            Verdict::new(rep.passed, rep.counterexample.as_ref().map(to_value), &rep)
        }
        "calibration" => {
            let term = parse::<TermFile>(required(a.term.as_deref(), "term", property)?)?.build(&tree)?;
            let rep = check_zcb_calibration(&risk()?, &tree, &term, a.t, c.budget, c.seed)?;
            let counterexample = (!rep.passed).then(|| json!({ "failed": rep.failed, "cash_additive": rep.cash_additive }));
            Verdict::new(rep.passed, counterexample, &rep)
        }
        "maximal-inequality" => {
            let mode = match a.trials {
                Some(trials) => MaximalMode::MonteCarlo { trials, seed: c.seed },
                None => MaximalMode::Exact,
            };
            let rep = maximal_inequality(&risk()?, &tree, &single_measure()?, &process()?, a.c, mode)?;
            let counterexample = (!rep.holds).then(|| json!({ "probability": rep.probability, "bound": rep.bound }));
            Verdict::new(rep.holds, counterexample, &rep)
        }
        "doob-riesz" => match doob_riesz(&risk()?, &tree, &single_measure()?) {
            Ok(dec) => {
                let mut rows = optional_rows(&tree, "discounted", &dec.discounted);
                rows.extend(optional_rows(&tree, "predictable", &dec.predictable));
                rows.extend(optional_rows(&tree, "martingale", &dec.martingale));
                rows.extend(optional_rows(&tree, "potential", &dec.potential));
                rows.extend(optional_rows(&tree, "remainder", &dec.remainder));
                let mut v = Verdict::new(true, None, &dec);
                v.rows = Some(rows);
                v
            }
            Err(Error::InconsistentInput(msg)) => Verdict::new(false, Some(json!({ "message": msg })), &Value::Null),
            Err(e) => return Err(e.into()),
        },
        "bubble-profile" => {
            let times: Vec<usize> = (0..=tree.horizon()).collect();
            let profile = bubble_profile(&risk()?, &tree, &single_measure()?, &times)?;
            let root = tree.id(tree.root());
            let rows = profile
                .points
                .iter()
                .flat_map(|p| {
                    [
                        Row { time: p.s, node: root, quantity: "value", value: p.value },
                        Row { time: p.s, node: root, quantity: "tail_sum", value: p.tail_sum },
                    ]
                })
                .collect();
            let mut v = Verdict::new(true, None, &profile);
            v.rows = Some(rows);
            v
        }
        "stability" => {
            if a.measure.is_empty() {
                return Err(Failure::Input("stability needs at least one --measure".into()));
            }
            let measures = a.measure.iter().map(|m| load_measure(m, &tree)).collect::<Result<Vec<_>, _>>()?;
            let membership = match a.cap {
                Some(cap) => Membership::DensityCap { cap },
                None => Membership::List,
            };
            let rep = check_stability(&tree, &measures, &membership)?;
            Verdict::new(rep.stable, rep.violation.as_ref().map(to_value), &rep)
        }
        _ => unreachable!("property list checked above"),
    };

    match (c.format, verdict.rows) {
        (Format::Csv, Some(rows)) => Output::csv(&rows, verdict.passed),
        _ => {
            let report = CheckReport {
                property: property.to_string(),
                status: if verdict.passed { Status::Pass } else { Status::Fail },
                counterexample: verdict.counterexample,
                tolerance: c.tol,
                seed: c.seed,
                budget: c.budget,
                details: verdict.details,
            };
            Ok(Output::json(&report, verdict.passed))
        }
    }
}
