//! Per-round run records, CSV persistence and exact regret accounting.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diagnostics of the average-reward learner on a round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MdpColumns {
    pub episode: u64,
    pub eta: f64,
    pub gamma_budget: f64,
    pub dbar: f64,
    pub borl_arm: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    /// Order `n` of the block the round belongs to.
    pub block: u32,
    pub epoch: u64,
    pub active_order: u32,
    pub policy: String,
    pub reward: f64,
    pub f_star: f64,
    pub g_tilde: f64,
    pub u_min: f64,
    /// `;`-separated schedule and restart events.
    pub event: String,
    pub mdp: Option<MdpColumns>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RestartCause {
    Test1 {
        order: u32,
        instance: u64,
    },
    Test2,
    /// The average-reward learner exhausted its widening budget.
    MdpSignal,
}

impl RestartCause {
    pub fn label(&self) -> String {
        match self {
            RestartCause::Test1 { order, instance } => format!("test1({order}#{instance})"),
            RestartCause::Test2 => "test2".into(),
            RestartCause::MdpSignal => "mdp_signal".into(),
        }
    }

    fn parse(text: &str) -> Option<Self> {
        match text {
            "test2" => Some(RestartCause::Test2),
            "mdp_signal" => Some(RestartCause::MdpSignal),
            _ => {
                let inner = text.strip_prefix("test1(")?.strip_suffix(')')?;
                let (m, id) = inner.split_once('#')?;
                Some(RestartCause::Test1 {
                    order: m.parse().ok()?,
                    instance: id.parse().ok()?,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestartEvent {
    pub t: usize,
    pub cause: RestartCause,
    /// Order of the block in which the restart fired.
    pub block: u32,
    pub epoch: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub horizon: usize,
    pub rounds: Vec<RoundRecord>,
    pub restarts: Vec<RestartEvent>,
}

const BASE_COLUMNS: [&str; 10] = [
    "t",
    "block",
    "epoch",
    "active_order",
    "policy",
    "reward",
    "f_star",
    "g_tilde",
    "u_min",
    "event",
];
const MDP_COLUMNS: [&str; 5] = ["episode", "eta", "gamma_budget", "dbar", "borl_arm"];

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, row: usize) -> Result<T> {
    let text = rec
        .get(i)
        .ok_or_else(|| Error::IncompleteLog(format!("row {row}: missing column {i}")))?;
    text.parse()
        .map_err(|_| Error::IncompleteLog(format!("row {row}: cannot parse `{text}` in column {i}")))
}

impl RunLog {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            rounds: Vec::with_capacity(horizon),
            restarts: Vec::new(),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.rounds.len() == self.horizon && self.rounds.iter().enumerate().all(|(i, r)| r.t == i + 1)
    }

    /// `sum_t (f*_t - R_t)`, summed in round order.
    pub fn dynamic_regret(&self) -> Result<f64> {
        if !self.is_complete() {
            return Err(Error::IncompleteLog(format!(
                "{} of {} rounds recorded",
                self.rounds.len(),
                self.horizon
            )));
        }
        let mut total = 0.0;
        for r in &self.rounds {
            total += r.f_star - r.reward;
        }
        Ok(total)
    }

    /// Cumulative regret after each round.
    pub fn regret_curve(&self) -> Vec<f64> {
        let mut total = 0.0;
        self.rounds
            .iter()
            .map(|r| {
                total += r.f_star - r.reward;
                total
            })
            .collect()
    }

    pub fn restart_count(&self) -> usize {
        self.restarts.len()
    }

    fn has_mdp_columns(&self) -> bool {
        self.rounds.first().is_some_and(|r| r.mdp.is_some())
    }

    /// Writes the log as CSV. Floats use the shortest decimal that parses
    /// back to the same double.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mdp = self.has_mdp_columns();
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = BASE_COLUMNS.to_vec();
        if mdp {
            header.extend(MDP_COLUMNS);
        }
        w.write_record(&header)?;
        for r in &self.rounds {
            let mut row = vec![
                r.t.to_string(),
                r.block.to_string(),
                r.epoch.to_string(),
                r.active_order.to_string(),
                r.policy.clone(),
                r.reward.to_string(),
                r.f_star.to_string(),
                r.g_tilde.to_string(),
                r.u_min.to_string(),
                r.event.clone(),
            ];
            if mdp {
                let m = r
                    .mdp
                    .ok_or_else(|| Error::IncompleteLog(format!("round {} lacks MDP columns", r.t)))?;
                row.extend([
                    m.episode.to_string(),
                    m.eta.to_string(),
                    m.gamma_budget.to_string(),
                    m.dbar.to_string(),
                    m.borl_arm.map(|a| a.to_string()).unwrap_or_default(),
                ]);
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
    }

    /// Reads a log written by [`RunLog::write_csv`]. The horizon is the
    /// number of rows; restarts are recovered from the event column.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(reader);
        let header = rd.headers()?.clone();
        let names: Vec<&str> = header.iter().collect();
        if names.len() < BASE_COLUMNS.len() || names[..BASE_COLUMNS.len()] != BASE_COLUMNS {
            return Err(Error::IncompleteLog(format!("unexpected header {names:?}")));
        }
        let mdp = match &names[BASE_COLUMNS.len()..] {
            [] => false,
            rest if rest == MDP_COLUMNS => true,
            rest => return Err(Error::IncompleteLog(format!("unexpected extra columns {rest:?}"))),
        };
        let mut rounds = Vec::new();
        let mut restarts = Vec::new();
        for (row, rec) in rd.records().enumerate() {
            let rec = rec?;
            let r = RoundRecord {
                t: field(&rec, 0, row)?,
                block: field(&rec, 1, row)?,
                epoch: field(&rec, 2, row)?,
                active_order: field(&rec, 3, row)?,
                policy: rec[4].to_string(),
                reward: field(&rec, 5, row)?,
                f_star: field(&rec, 6, row)?,
                g_tilde: field(&rec, 7, row)?,
                u_min: field(&rec, 8, row)?,
                event: rec[9].to_string(),
                mdp: if mdp {
                    let arm = &rec[14];
                    Some(MdpColumns {
                        episode: field(&rec, 10, row)?,
                        eta: field(&rec, 11, row)?,
                        gamma_budget: field(&rec, 12, row)?,
                        dbar: field(&rec, 13, row)?,
                        borl_arm: if arm.is_empty() {
                            None
                        } else {
                            Some(field(&rec, 14, row)?)
                        },
                    })
                } else {
                    None
                },
            };
            for ev in r.event.split(';') {
                if let Some(cause) = ev.strip_prefix("restart:").and_then(RestartCause::parse) {
                    restarts.push(RestartEvent {
                        t: r.t,
                        cause,
                        block: r.block,
                        epoch: r.epoch,
                    });
                }
            }
            rounds.push(r);
        }
        Ok(Self {
            horizon: rounds.len(),
            rounds,
            restarts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(t: usize, reward: f64, f_star: f64) -> RoundRecord {
        RoundRecord {
            t,
            block: 0,
            epoch: 0,
            active_order: 0,
            policy: "0".into(),
            reward,
            f_star,
            g_tilde: 1.0,
            u_min: 1.0,
            event: String::new(),
            mdp: None,
        }
    }

    #[test]
    fn regret_of_simple_logs() {
        let mut log = RunLog::new(10);
        log.rounds = (1..=10).map(|t| record(t, 0.0, 1.0)).collect();
        assert_eq!(log.dynamic_regret().unwrap(), 10.0);
        log.rounds = (1..=10).map(|t| record(t, 0.3, 0.3)).collect();
        assert_eq!(log.dynamic_regret().unwrap(), 0.0);
        log.rounds.pop();
        assert!(matches!(log.dynamic_regret(), Err(Error::IncompleteLog(_))));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut log = RunLog::new(3);
        log.rounds = vec![
            record(1, 1.0, 0.1 + 0.2),
            record(2, 0.0, 1.0 / 3.0),
            record(3, 1.0, 0.7),
        ];
        log.rounds[1].event = "spawn:0#1;restart:test1(2#5)".into();
        log.rounds[2].g_tilde = f64::INFINITY;
        log.restarts.push(RestartEvent {
            t: 2,
            cause: RestartCause::Test1 { order: 2, instance: 5 },
            block: 0,
            epoch: 0,
        });
        let text = log.to_csv_string().unwrap();
        let back = RunLog::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, log);
        assert_eq!(
            back.dynamic_regret().unwrap().to_bits(),
            log.dynamic_regret().unwrap().to_bits()
        );
    }

    #[test]
    fn mdp_columns_round_trip() {
        let mut log = RunLog::new(1);
        let mut r = record(1, 1.0, 0.5);
        r.mdp = Some(MdpColumns {
            episode: 3,
            eta: 1.0 / 1024.0,
            gamma_budget: 0.1,
            dbar: 2.0,
            borl_arm: Some(1),
        });
        log.rounds.push(r);
        let text = log.to_csv_string().unwrap();
        assert!(text.starts_with("t,block,epoch,active_order,policy,reward,f_star,g_tilde,u_min,event,episode"));
        assert_eq!(RunLog::read_csv(text.as_bytes()).unwrap(), log);
    }

    #[test]
    fn cause_labels_parse_back() {
        for c in [
            RestartCause::Test2,
            RestartCause::MdpSignal,
            RestartCause::Test1 { order: 3, instance: 17 },
        ] {
            assert_eq!(RestartCause::parse(&c.label()), Some(c));
        }
    }
}
