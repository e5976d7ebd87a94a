use super::{
    ActivityEvent, AppForegroundEvent, EsmResponse, EventLog, IbiEntry, IbiSeries,
    LocationEvent, NotificationEvent, PhysioChannel, ScreenEvent,
};

/// Anything with a position on the UTC time axis.
pub trait Timed {
    fn time_millis(&self) -> i64;
}

macro_rules! timed_at {
    ($($ty:ty),*) => {
        $(impl Timed for $ty {
            fn time_millis(&self) -> i64 {
                self.at.utc_millis
            }
        })*
    };
}

timed_at!(
    AppForegroundEvent,
    ScreenEvent,
    ActivityEvent,
    LocationEvent,
    EsmResponse
);

impl Timed for NotificationEvent {
    fn time_millis(&self) -> i64 {
        self.arrival.utc_millis
    }
}

impl Timed for i64 {
    fn time_millis(&self) -> i64 {
        *self
    }
}

/// Items of a time-sorted slice with time in `[end - duration, end)`.
pub fn slice_window<T: Timed>(sorted: &[T], end_millis: i64, duration_millis: i64) -> &[T] {
    debug_assert!(duration_millis > 0);
    let start = end_millis.saturating_sub(duration_millis);
    let lo = sorted.partition_point(|e| e.time_millis() < start);
    let hi = sorted.partition_point(|e| e.time_millis() < end_millis);
    &sorted[lo..hi.max(lo)]
}

/// Borrowed view of an [`EventLog`] restricted to one window.
#[derive(Debug, Clone, Copy)]
pub struct LogView<'a> {
    pub notifications: &'a [NotificationEvent],
    pub app_events: &'a [AppForegroundEvent],
    pub screen_events: &'a [ScreenEvent],
    pub activity_events: &'a [ActivityEvent],
    pub location_events: &'a [LocationEvent],
    pub esm_responses: &'a [EsmResponse],
}

impl EventLog {
    pub fn window(&self, end_millis: i64, duration_millis: i64) -> LogView<'_> {
        LogView {
            notifications: slice_window(&self.notifications, end_millis, duration_millis),
            app_events: slice_window(&self.app_events, end_millis, duration_millis),
            screen_events: slice_window(&self.screen_events, end_millis, duration_millis),
            activity_events: slice_window(&self.activity_events, end_millis, duration_millis),
            location_events: slice_window(&self.location_events, end_millis, duration_millis),
            esm_responses: slice_window(&self.esm_responses, end_millis, duration_millis),
        }
    }
}

/// Samples of one channel inside a window; `offset` is the index of the
/// first sample in the parent channel.
#[derive(Debug, Clone, Copy)]
pub struct ChannelWindow<'a> {
    pub offset: usize,
    pub rate_hz: f64,
    pub samples: &'a [f64],
}

impl ChannelWindow<'_> {
    /// `(t, y)` pairs with `t` in seconds from the first sample of the window.
    pub fn timed_samples(&self) -> Vec<(f64, f64)> {
        self.samples
            .iter()
            .enumerate()
            .map(|(i, &y)| (i as f64 / self.rate_hz, y))
            .collect()
    }
}

impl PhysioChannel {
    /// Index of the first sample at or after `t` (relative milliseconds may be negative).
    fn first_index_at_or_after(&self, t_millis: i64) -> usize {
        let delta = (t_millis - self.start.utc_millis) as f64;
        if delta <= 0.0 {
            return 0;
        }
        let idx = (delta * self.rate_hz / 1000.0).ceil();
        (idx as usize).min(self.samples.len())
    }

    pub fn window(&self, end_millis: i64, duration_millis: i64) -> ChannelWindow<'_> {
        let lo = self.first_index_at_or_after(end_millis - duration_millis);
        let hi = self.first_index_at_or_after(end_millis).max(lo);
        ChannelWindow {
            offset: lo,
            rate_hz: self.rate_hz,
            samples: &self.samples[lo..hi],
        }
    }
}

/// IBI entries inside a window, with beat times in seconds relative to the
/// series start.
#[derive(Debug, Clone, Copy)]
pub struct IbiWindow<'a> {
    pub entries: &'a [IbiEntry],
}

impl IbiWindow<'_> {
    pub fn intervals_ms(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.interval_seconds * 1000.0).collect()
    }
}

impl IbiSeries {
    pub fn window(&self, end_millis: i64, duration_millis: i64) -> IbiWindow<'_> {
        let start = end_millis - duration_millis;
        let lo = self
            .entries
            .partition_point(|e| self.entry_millis(e) < start);
        let hi = self
            .entries
            .partition_point(|e| self.entry_millis(e) < end_millis)
            .max(lo);
        IbiWindow {
            entries: &self.entries[lo..hi],
        }
    }
}
