//! Webhook delivery: due notifications are posted as JSON to a fixed URL.

use std::sync::Arc;
use std::time::Duration as StdDuration;

use wavesched_core::clinic::{Clinic, Clock};
use wavesched_core::notifications::{LogSink, Notification, NotificationSink, WireNotification};

/// Buffers notifications handed over by the outbox so they can be posted
/// asynchronously afterwards.
#[derive(Debug, Default)]
pub struct WebhookSink {
    pending: Vec<WireNotification>,
}

impl NotificationSink for WebhookSink {
    fn deliver(&mut self, n: &Notification) -> Result<(), String> {
        self.pending.push(n.into());
        Ok(())
    }
}

impl WebhookSink {
    pub fn take(&mut self) -> Vec<WireNotification> {
        std::mem::take(&mut self.pending)
    }

    /// Posts every buffered notification; returns the failures.
    pub async fn flush(&mut self, client: &reqwest::Client, url: &str) -> Vec<String> {
        let mut failures = Vec::new();
        for n in self.take() {
            let res = client.post(url).json(&n).send().await.and_then(|r| r.error_for_status());
            if let Err(e) = res {
                failures.push(format!("notification {}: {e}", n.id));
            }
        }
        failures
    }
}

/// Periodically drains due notifications into the log and, if configured,
/// the webhook. Runs until the task is dropped.
pub async fn dispatch_loop(clinic: Arc<Clinic>, clock: Arc<dyn Clock>, webhook: Option<String>, every: StdDuration) {
    let client = reqwest::Client::builder()
        .timeout(StdDuration::from_secs(10))
        .build()
        .expect("http client");
    let mut ticker = tokio::time::interval(every);
    loop {
        ticker.tick().await;
        let mut hook = WebhookSink::default();
        let mut log = LogSink(Vec::new());
        let mut failures = clinic.dispatch(clock.now(), &mut [&mut hook, &mut log]);
        for line in String::from_utf8_lossy(&log.0).lines() {
            tracing::info!(target: "wavesched::notify", "{line}");
        }
        match &webhook {
            Some(url) => failures.extend(hook.flush(&client, url).await),
            None => drop(hook.take()),
        }
        for f in failures {
            tracing::warn!("delivery failed: {f}");
        }
    }
}
