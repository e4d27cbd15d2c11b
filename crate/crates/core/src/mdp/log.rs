//! Transition log: one CSV row per step, reward constants in a comment header.
//!
//! ```text
//! # reward k1=1 k2=0.5 k3=1 k4=0.5 o=3 w_fwd=0.2 terminal_penalty=10 collision_radius=3 proximity_radius=10
//! episode,step,x_e,y_e,y_c_norm,edge_l,edge_r,p1,x1,y1,v1,p2,...,action,g,f,t,p,p_i,total,done,event
//! ```
//!
//! `p_i` is a string of `0`/`1` flags, one per traffic slot. `event` is empty,
//! `collision`, `breach` or `collision+breach`.

use std::io::{BufRead, BufReader, Read, Write};

use super::{Action, RewardBreakdown, RewardConfig, StateVector, TrafficSlot};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub episode: usize,
    pub step: usize,
    pub state: StateVector,
    pub action: Action,
    pub reward: RewardBreakdown,
    pub done: bool,
}

fn header(n_slots: usize) -> Vec<String> {
    let mut h: Vec<String> = ["episode", "step", "x_e", "y_e", "y_c_norm", "edge_l", "edge_r"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for i in 1..=n_slots {
        for k in ["p", "x", "y", "v"] {
            h.push(format!("{k}{i}"));
        }
    }
    for k in ["action", "g", "f", "t", "p", "p_i", "total", "done", "event"] {
        h.push(k.to_string());
    }
    h
}

fn config_line(c: &RewardConfig) -> String {
    format!(
        "# reward k1={} k2={} k3={} k4={} o={} w_fwd={} terminal_penalty={} collision_radius={} proximity_radius={}",
        c.k1, c.k2, c.k3, c.k4, c.o, c.w_fwd, c.terminal_penalty, c.collision_radius, c.proximity_radius
    )
}

pub fn write_transitions<W: Write>(mut out: W, config: &RewardConfig, rows: &[Transition]) -> std::io::Result<()> {
    writeln!(out, "{}", config_line(config))?;
    let n_slots = rows.first().map_or(0, |r| r.state.traffic.len());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(n_slots))?;
    for r in rows {
        let s = &r.state;
        let mut rec = vec![
            r.episode.to_string(),
            r.step.to_string(),
            s.x_e.to_string(),
            s.y_e.to_string(),
            s.y_c_norm.to_string(),
            s.edge_l.to_string(),
            s.edge_r.to_string(),
        ];
        for t in &s.traffic {
            rec.extend([
                u8::from(t.present).to_string(),
                t.x.to_string(),
                t.y.to_string(),
                t.v.to_string(),
            ]);
        }
        let b = &r.reward;
        rec.extend([
            r.action.index().to_string(),
            b.g.to_string(),
            b.f.to_string(),
            b.t.to_string(),
            u8::from(b.p).to_string(),
            b.p_i.iter().map(|&f| if f { '1' } else { '0' }).collect(),
            b.total.to_string(),
            u8::from(r.done).to_string(),
            match (b.collided, b.breached) {
                (false, false) => "",
                (true, false) => "collision",
                (false, true) => "breach",
                (true, true) => "collision+breach",
            }
            .to_string(),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

fn parse_config(line: &str) -> Result<RewardConfig, LogError> {
    let err = |m: String| LogError::Format { line: 1, message: m };
    let body = line
        .strip_prefix("# reward ")
        .ok_or_else(|| err("missing reward header".into()))?;
    let mut c = RewardConfig::default();
    for kv in body.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| err(format!("bad entry {kv}")))?;
        let f: f64 = v.parse().map_err(|_| err(format!("bad value for {k}")))?;
        match k {
            "k1" => c.k1 = f,
            "k2" => c.k2 = f,
            "k3" => c.k3 = f,
            "k4" => c.k4 = f,
            "o" => c.o = f as u32,
            "w_fwd" => c.w_fwd = f,
            "terminal_penalty" => c.terminal_penalty = f,
            "collision_radius" => c.collision_radius = f,
            "proximity_radius" => c.proximity_radius = f,
            _ => return Err(err(format!("unknown key {k}"))),
        }
    }
    Ok(c)
}

pub fn read_transitions<R: Read>(input: R) -> Result<(RewardConfig, Vec<Transition>), LogError> {
    let mut input = BufReader::new(input);
    let mut first = String::new();
    input.read_line(&mut first)?;
    let config = parse_config(first.trim_end())?;
    let mut rdr = csv::Reader::from_reader(input);
    let cols = rdr
        .headers()
        .map_err(|e| LogError::Format {
            line: 2,
            message: e.to_string(),
        })?
        .len();
    let n_slots = cols.saturating_sub(16) / 4;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 3;
        let fail = |m: &str| LogError::Format {
            line,
            message: m.to_string(),
        };
        let rec = rec.map_err(|e| fail(&e.to_string()))?;
        if rec.len() != cols {
            return Err(fail("wrong column count"));
        }
        let num = |k: usize| {
            rec[k]
                .parse::<f64>()
                .map_err(|_| fail(&format!("column {} not numeric", k + 1)))
        };
        let int = |k: usize| {
            rec[k]
                .parse::<usize>()
                .map_err(|_| fail(&format!("column {} not an integer", k + 1)))
        };
        let mut traffic = Vec::with_capacity(n_slots);
        for s in 0..n_slots {
            let o = 7 + 4 * s;
            traffic.push(TrafficSlot {
                present: int(o)? == 1,
                x: num(o + 1)?,
                y: num(o + 2)?,
                v: num(o + 3)?,
            });
        }
        let o = 7 + 4 * n_slots;
        let action = Action::from_index(int(o)?).map_err(|e| fail(&e.to_string()))?;
        let p_i: Vec<bool> = rec[o + 5].chars().map(|c| c == '1').collect();
        let event = &rec[o + 8];
        rows.push(Transition {
            episode: int(0)?,
            step: int(1)?,
            state: StateVector {
                x_e: num(2)?,
                y_e: num(3)?,
                y_c_norm: num(4)?,
                edge_l: num(5)?,
                edge_r: num(6)?,
                traffic,
            },
            action,
            reward: RewardBreakdown {
                g: num(o + 1)?,
                f: num(o + 2)?,
                t: num(o + 3)?,
                p: int(o + 4)? == 1,
                p_i,
                total: num(o + 6)?,
                collided: event.contains("collision"),
                breached: event.contains("breach"),
            },
            done: int(o + 7)? == 1,
        });
    }
    Ok((config, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{sample_initial_state, SamplerBounds, TrainingEnv};

    #[test]
    fn round_trip_and_decomposition() {
        let cfg = RewardConfig::default();
        let mut rows = Vec::new();
        for ep in 0..5 {
            let s0 = sample_initial_state(&mut crate::seed::rng(2, ep), &SamplerBounds::default());
            let mut env = TrainingEnv::new(s0, cfg);
            let mut step = 0;
            while !env.is_done() {
                let state = env.state().clone();
                let action = Action::from_index((ep as usize * 7 + step * 3) % 20).unwrap();
                let r = env.step(action).unwrap();
                rows.push(Transition {
                    episode: ep as usize,
                    step,
                    state,
                    action,
                    reward: r.reward,
                    done: r.done,
                });
                step += 1;
            }
        }
        let mut buf = Vec::new();
        write_transitions(&mut buf, &cfg, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# reward k1=1 k2=0.5"));
        let (cfg2, back) = read_transitions(&buf[..]).unwrap();
        assert_eq!(cfg2, cfg);
        assert_eq!(back.len(), rows.len());
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.state, b.state);
            assert_eq!(a.reward, b.reward);
            assert_eq!(a.done, b.done);
            let gate = if b.reward.p { 0.0 } else { 1.0 };
            assert_eq!(b.reward.total, b.reward.g + gate * b.reward.f + b.reward.t);
        }
    }

    #[test]
    fn bad_row_reports_line() {
        let text = "# reward k1=1\nepisode,step\n1,2,3\n";
        let err = read_transitions(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }
}
