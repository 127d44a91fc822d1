use std::fmt::Write as _;

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub step: usize,
    pub metric: String,
    pub value: f64,
}

/// Rows of `(step, metric, value)` rendered as text or CSV.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricTable {
    pub rows: Vec<MetricRow>,
}

impl MetricTable {
    pub fn push(&mut self, step: usize, metric: impl Into<String>, value: f64) {
        self.rows.push(MetricRow {
            step,
            metric: metric.into(),
            value,
        });
    }

    pub fn get(&self, step: usize, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.step == step && r.metric == metric)
            .map(|r| r.value)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,metric,value\n");
        for r in &self.rows {
            writeln!(s, "{},{},{}", r.step, r.metric, r.value).expect("string write");
        }
        s
    }

    /// One line per step, one column per metric, in first-seen order.
    pub fn to_text(&self) -> String {
        let mut metrics: Vec<&str> = Vec::new();
        let mut steps: Vec<usize> = Vec::new();
        for r in &self.rows {
            if !metrics.contains(&r.metric.as_str()) {
                metrics.push(&r.metric);
            }
            if !steps.contains(&r.step) {
                steps.push(r.step);
            }
        }
        let width = metrics.iter().map(|m| m.len()).max().unwrap_or(0).max(8);
        let mut s = format!("{:>6}", "step");
        for m in &metrics {
            write!(s, "  {m:>width$}").expect("string write");
        }
        s.push('\n');
        for &step in &steps {
            write!(s, "{step:>6}").expect("string write");
            for m in &metrics {
                match self.get(step, m) {
                    Some(v) => write!(s, "  {v:>width$.4}"),
                    None => write!(s, "  {:>width$}", "-"),
                }
                .expect("string write");
            }
            s.push('\n');
        }
        s
    }
}
