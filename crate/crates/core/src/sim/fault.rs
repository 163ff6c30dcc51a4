//! Fault-injection plans: rules matching message events or instants and
//! the crash, drop or delay they cause.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::ids::{Endpoint, NodeId, SimTime};

/// When a rule is checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    /// As a node hands a message to the network.
    Send,
    /// As a message arrives, before the receiver handles it.
    Deliver,
    /// At a fixed simulated instant.
    At(SimTime),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultAction {
    /// Permanent fail-stop of a node.
    Crash { node: NodeId },
    /// Crash the sender. On a send trigger the message and everything
    /// after it in the same batch is lost.
    CrashSender,
    /// Crash the receiver; the matched message is lost.
    CrashReceiver,
    Drop,
    Delay { by: Duration },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultRule {
    pub trigger: Trigger,
    /// Message kind as reported by `Message::kind`.
    #[serde(default)]
    pub kind: Option<String>,
    #[serde(default)]
    pub from: Option<Endpoint>,
    #[serde(default)]
    pub to: Option<Endpoint>,
    /// Fires on the n-th matching event, counting from 1.
    #[serde(default = "first")]
    pub occurrence: u32,
    pub action: FaultAction,
}

fn first() -> u32 {
    1
}

impl FaultRule {
    pub fn matches(&self, kind: &str, from: Endpoint, to: Endpoint) -> bool {
        self.kind.as_deref().is_none_or(|k| k == kind)
            && self.from.is_none_or(|f| f == from)
            && self.to.is_none_or(|t| t == to)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FaultPlan {
    pub rules: Vec<FaultRule>,
}

impl FaultPlan {
    pub fn new(rules: Vec<FaultRule>) -> Self {
        FaultPlan { rules }
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

/// A plan being executed: counts matches and fires each rule once.
#[derive(Debug, Clone, Default)]
pub(crate) struct FaultState {
    rules: Vec<(FaultRule, u32, bool)>,
}

impl FaultState {
    pub fn new(plan: &FaultPlan) -> Self {
        FaultState { rules: plan.rules.iter().cloned().map(|r| (r, 0, false)).collect() }
    }

    /// Timed crashes to schedule up front.
    pub fn timed(&self) -> Vec<(SimTime, FaultAction)> {
        self.rules
            .iter()
            .filter_map(|(r, _, _)| match r.trigger {
                Trigger::At(t) => Some((t, r.action)),
                _ => None,
            })
            .collect()
    }

    /// Actions fired by one message event.
    pub fn check(&mut self, send: bool, kind: &str, from: Endpoint, to: Endpoint) -> Vec<FaultAction> {
        let mut out = Vec::new();
        for (rule, seen, fired) in &mut self.rules {
            let phase = matches!((rule.trigger, send), (Trigger::Send, true) | (Trigger::Deliver, false));
            if *fired || !phase || !rule.matches(kind, from, to) {
                continue;
            }
            *seen += 1;
            if *seen == rule.occurrence {
                *fired = true;
                out.push(rule.action);
            }
        }
        out
    }
}
