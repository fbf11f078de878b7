//! Live operator session: tick loop, alarm log, operator actions, automatic
//! graph queries and an ordered event outbox for streaming clients.
//!
//! Plant actions (heater, coolant valve) are queued and take effect at the
//! start of the next tick, in issue order. Pause, resume and alarm
//! acknowledgment take effect immediately.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::{AutoQueryRule, ScenarioConfig};
use crate::graph::RiskGraph;
use crate::monitor::{AlarmEvent, Monitor, Sample, Severity};
use crate::plant::PlantState;
use crate::query::{run_query, Query, QueryResult};
use crate::scenario::{resolve_charts, Simulator};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorAction {
    TurnOffHeater,
    SetCoolantValve { target: f64 },
    AcknowledgeAlarm { alarm_id: u64 },
    Pause,
    Resume,
}

impl OperatorAction {
    /// Acts on the plant, so it waits for the next tick.
    pub fn is_plant_action(&self) -> bool {
        matches!(self, Self::TurnOffHeater | Self::SetCoolantValve { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub seq: u64,
    /// Session tick when the action was issued.
    pub issued_at: u64,
    pub action: OperatorAction,
    /// Tick at whose start the action took effect; `None` while queued.
    pub applied_at: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notice: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlarmRecord {
    pub id: u64,
    #[serde(flatten)]
    pub event: AlarmEvent,
    pub acknowledged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acknowledged_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoQuery {
    pub alarm_id: u64,
    pub result: QueryResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "data", rename_all = "snake_case")]
pub enum EventPayload {
    Telemetry(Sample),
    Alarm(AlarmRecord),
    Acknowledged { alarm_id: u64, tick: u64 },
    Query(AutoQuery),
    Action(ActionRecord),
    Status(SessionStatus),
}

impl EventPayload {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Telemetry(_) => "telemetry",
            Self::Alarm(_) => "alarm",
            Self::Acknowledged { .. } => "acknowledged",
            Self::Query(_) => "query",
            Self::Action(_) => "action",
            Self::Status(_) => "status",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    #[serde(flatten)]
    pub payload: EventPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub id: String,
    pub tick: u64,
    pub duration: u64,
    pub paused: bool,
    pub finished: bool,
    pub state: PlantState,
    pub coolant_command: f64,
    pub heater_off: bool,
    pub coolant_override: Option<f64>,
    pub pending_actions: usize,
    pub alarms: usize,
    pub unacknowledged_alarms: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionAck {
    pub seq: u64,
    pub issued_at: u64,
    /// Tick at whose start the action takes effect.
    pub effective_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notice: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickOutput {
    pub sample: Sample,
    pub alarms: Vec<AlarmRecord>,
    pub queries: Vec<AutoQuery>,
}

#[derive(Debug, Clone)]
pub struct Session {
    id: String,
    config: ScenarioConfig,
    sim: Simulator,
    monitor: Monitor,
    graph: Option<Arc<RiskGraph>>,
    auto_query: Vec<AutoQueryRule>,
    tick: u64,
    paused: bool,
    pending: Vec<usize>,
    actions: Vec<ActionRecord>,
    alarms: Vec<AlarmRecord>,
    telemetry: Vec<Sample>,
    queries: Vec<AutoQuery>,
    events: Vec<SessionEvent>,
}

impl Session {
    /// A paused session at t = 0.
    pub fn start(
        id: impl Into<String>,
        config: ScenarioConfig,
        graph: Option<Arc<RiskGraph>>,
    ) -> Result<Self> {
        config.validate()?;
        let sim = Simulator::new(&config)?;
        let charts = resolve_charts(&config)?;
        let monitor = Monitor::new(&charts, &config.monitor.setpoints)?;
        let mut s = Self {
            id: id.into(),
            auto_query: config.auto_query.clone(),
            config,
            sim,
            monitor,
            graph,
            tick: 0,
            paused: true,
            pending: Vec::new(),
            actions: Vec::new(),
            alarms: Vec::new(),
            telemetry: Vec::new(),
            queries: Vec::new(),
            events: Vec::new(),
        };
        s.emit(EventPayload::Status(s.status()));
        Ok(s)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    pub fn is_finished(&self) -> bool {
        self.tick >= self.config.duration
    }

    pub fn state(&self) -> PlantState {
        self.sim.state()
    }

    pub fn graph(&self) -> Option<&RiskGraph> {
        self.graph.as_deref()
    }

    pub fn telemetry(&self) -> &[Sample] {
        &self.telemetry
    }

    /// Samples with `time > since`.
    pub fn telemetry_since(&self, since: f64) -> &[Sample] {
        let start = self.telemetry.partition_point(|s| s.time <= since);
        &self.telemetry[start..]
    }

    pub fn alarms(&self) -> &[AlarmRecord] {
        &self.alarms
    }

    pub fn actions(&self) -> &[ActionRecord] {
        &self.actions
    }

    pub fn queries(&self) -> &[AutoQuery] {
        &self.queries
    }

    /// Events with `seq > after`.
    pub fn events_since(&self, after: u64) -> &[SessionEvent] {
        let start = self.events.partition_point(|e| e.seq <= after);
        &self.events[start..]
    }

    pub fn last_event_seq(&self) -> u64 {
        self.events.last().map(|e| e.seq).unwrap_or(0)
    }

    pub fn auto_query_rules(&self) -> &[AutoQueryRule] {
        &self.auto_query
    }

    /// Replaces the alarm-to-keyword table; applies from the next alarm.
    pub fn set_auto_query_rules(&mut self, rules: Vec<AutoQueryRule>) -> Result<()> {
        for r in &rules {
            Query::new(&r.keywords)?
                .with_depth(r.max_depth)
                .validate()?;
        }
        self.auto_query = rules;
        Ok(())
    }

    pub fn status(&self) -> SessionStatus {
        SessionStatus {
            id: self.id.clone(),
            tick: self.tick,
            duration: self.config.duration,
            paused: self.paused,
            finished: self.is_finished(),
            state: self.sim.state(),
            coolant_command: self.sim.last_command(),
            heater_off: self.sim.heater_is_off(),
            coolant_override: self.sim.coolant_override(),
            pending_actions: self.pending.len(),
            alarms: self.alarms.len(),
            unacknowledged_alarms: self.alarms.iter().filter(|a| !a.acknowledged).count(),
        }
    }

    fn emit(&mut self, payload: EventPayload) {
        let seq = self.last_event_seq() + 1;
        self.events.push(SessionEvent { seq, payload });
    }

    pub fn apply_action(&mut self, action: OperatorAction) -> Result<ActionAck> {
        let mut notice = None;
        match &action {
            OperatorAction::Pause | OperatorAction::Resume => {}
            OperatorAction::AcknowledgeAlarm { alarm_id } => {
                let alarm = self
                    .alarms
                    .iter()
                    .find(|a| a.id == *alarm_id)
                    .ok_or_else(|| Error::UnknownIds(vec![format!("alarm {alarm_id}")]))?;
                if alarm.acknowledged {
                    notice = Some(format!("alarm {alarm_id} was already acknowledged"));
                }
            }
            _ if self.paused => {
                return Err(Error::Session(
                    "session is paused; resume before acting on the plant".into(),
                ));
            }
            _ if self.is_finished() => {
                return Err(Error::Session("session has finished".into()));
            }
            OperatorAction::SetCoolantValve { target } => {
                if !target.is_finite() {
                    return Err(Error::invalid("coolant target must be finite"));
                }
                let c = &self.config.controller;
                let applied = target.clamp(c.u_min, c.u_max);
                if applied != *target {
                    notice = Some(format!("coolant target {target} clamped to {applied}"));
                }
            }
            OperatorAction::TurnOffHeater => {
                if self.sim.heater_is_off() {
                    notice = Some("heater is already off".into());
                }
            }
        }
        let seq = self.actions.len() as u64 + 1;
        let plant = action.is_plant_action();
        let toggles = matches!(action, OperatorAction::Pause | OperatorAction::Resume);
        let record = ActionRecord {
            seq,
            issued_at: self.tick,
            action: action.clone(),
            applied_at: (!plant).then_some(self.tick),
            notice: notice.clone(),
        };
        self.actions.push(record.clone());
        if plant {
            self.pending.push(self.actions.len() - 1);
        } else {
            match action {
                OperatorAction::Pause => self.paused = true,
                OperatorAction::Resume => self.paused = false,
                OperatorAction::AcknowledgeAlarm { alarm_id } => {
                    let tick = self.tick;
                    let alarm = self
                        .alarms
                        .iter_mut()
                        .find(|a| a.id == alarm_id)
                        .expect("checked above");
                    if !alarm.acknowledged {
                        alarm.acknowledged = true;
                        alarm.acknowledged_at = Some(tick);
                        self.emit(EventPayload::Acknowledged { alarm_id, tick });
                    }
                }
                _ => unreachable!("plant actions are queued"),
            }
        }
        self.emit(EventPayload::Action(record));
        if toggles {
            self.emit(EventPayload::Status(self.status()));
        }
        Ok(ActionAck {
            seq,
            issued_at: self.tick,
            effective_at: self.tick,
            notice,
        })
    }

    /// Advances one tick: queued actions, then inputs, controller, plant and
    /// monitor.
    pub fn tick(&mut self) -> Result<TickOutput> {
        if self.paused {
            return Err(Error::Session("session is paused".into()));
        }
        if self.is_finished() {
            return Err(Error::Session(format!(
                "session finished at t = {}",
                self.config.duration
            )));
        }
        for i in std::mem::take(&mut self.pending) {
            match self.actions[i].action {
                OperatorAction::TurnOffHeater => self.sim.turn_off_heater(),
                OperatorAction::SetCoolantValve { target } => {
                    self.sim.set_coolant_override(target)?;
                }
                _ => unreachable!("only plant actions are queued"),
            }
            self.actions[i].applied_at = Some(self.tick);
        }
        let sample = self.sim.step()?;
        self.tick += 1;
        self.telemetry.push(sample);
        self.emit(EventPayload::Telemetry(sample));
        let mut alarms = Vec::new();
        let mut queries = Vec::new();
        for event in self.monitor.push(&sample) {
            let record = AlarmRecord {
                id: self.alarms.len() as u64 + 1,
                event,
                acknowledged: false,
                acknowledged_at: None,
            };
            self.alarms.push(record.clone());
            self.emit(EventPayload::Alarm(record.clone()));
            if record.event.severity == Severity::Alarm {
                if let Some(result) = self.auto_query(&record.event)? {
                    let q = AutoQuery {
                        alarm_id: record.id,
                        result,
                    };
                    self.queries.push(q.clone());
                    self.emit(EventPayload::Query(q.clone()));
                    queries.push(q);
                }
            }
            alarms.push(record);
        }
        if self.is_finished() {
            self.emit(EventPayload::Status(self.status()));
        }
        Ok(TickOutput {
            sample,
            alarms,
            queries,
        })
    }

    /// Runs up to `n` ticks, stopping early at the end of the scenario.
    pub fn run(&mut self, n: u64) -> Result<Vec<TickOutput>> {
        let mut out = Vec::new();
        for _ in 0..n {
            if self.is_finished() {
                break;
            }
            out.push(self.tick()?);
        }
        Ok(out)
    }

    /// Query of the loaded graph.
    pub fn query(&self, query: &Query) -> Result<QueryResult> {
        match &self.graph {
            Some(g) => run_query(g, query),
            None => Err(Error::Session(
                "no risk graph loaded for this session".into(),
            )),
        }
    }

    /// Keyword query mapped from the alarm's channel and direction. `None`
    /// when no rule covers the alarm; an empty result without a graph.
    pub fn auto_query(&self, alarm: &AlarmEvent) -> Result<Option<QueryResult>> {
        let Some(rule) = self
            .auto_query
            .iter()
            .find(|r| r.channel == alarm.channel && r.direction == alarm.direction)
        else {
            log::info!(
                "no auto-query rule for {} {:?}",
                alarm.channel.as_str(),
                alarm.direction
            );
            return Ok(None);
        };
        let query = Query::new(&rule.keywords)?.with_depth(rule.max_depth);
        Ok(Some(match &self.graph {
            Some(g) => run_query(g, &query)?,
            None => QueryResult {
                query,
                seeds: vec![],
                nodes: vec![],
                triples: vec![],
                chains: vec![],
                recommendations: vec![],
            },
        }))
    }
}

/// Actions to issue at given ticks; replays a recorded action log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ActionScript {
    pub entries: Vec<ScriptEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub tick: u64,
    pub action: OperatorAction,
}

impl ActionScript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn at(mut self, tick: u64, action: OperatorAction) -> Self {
        self.entries.push(ScriptEntry { tick, action });
        self
    }

    /// The plant and acknowledgment actions of a session log. Pause and resume
    /// do not change the trajectory and are left out.
    pub fn from_log(log: &[ActionRecord]) -> Self {
        Self {
            entries: log
                .iter()
                .filter(|r| !matches!(r.action, OperatorAction::Pause | OperatorAction::Resume))
                .map(|r| ScriptEntry {
                    tick: r.issued_at,
                    action: r.action.clone(),
                })
                .collect(),
        }
    }
}

/// Runs a fresh session to `ticks` (or the end of the scenario), issuing the
/// script's actions when the session reaches their tick. Entries sharing a
/// tick are issued in script order.
pub fn replay(
    id: &str,
    config: &ScenarioConfig,
    graph: Option<Arc<RiskGraph>>,
    script: &ActionScript,
    ticks: u64,
) -> Result<Session> {
    let mut entries: Vec<&ScriptEntry> = script.entries.iter().collect();
    entries.sort_by_key(|e| e.tick);
    let mut s = Session::start(id, config.clone(), graph)?;
    s.apply_action(OperatorAction::Resume)?;
    let mut next = 0;
    let end = ticks.min(config.duration);
    loop {
        while next < entries.len() && entries[next].tick <= s.tick_count() {
            s.apply_action(entries[next].action.clone())?;
            next += 1;
        }
        if s.tick_count() >= end {
            break;
        }
        s.tick()?;
    }
    Ok(s)
}
