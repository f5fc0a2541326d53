/// Total costs, one row per controller and one column per density. A
/// missing cell marks a run that aborted.
pub struct CostTable {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub cells: Vec<Vec<Option<f64>>>,
}

fn cell(value: Option<f64>, precision: usize) -> String {
    match value {
        Some(v) => format!("{v:.precision$}"),
        None => "aborted".into(),
    }
}

impl CostTable {
    /// Full precision, for machines.
    pub fn to_csv(&self) -> String {
        let mut out = format!("controller,{}\n", self.columns.join(","));
        for (name, row) in self.rows.iter().zip(&self.cells) {
            let values: Vec<String> = row.iter().map(|v| v.map_or("aborted".into(), |v| v.to_string())).collect();
            out += &format!("{name},{}\n", values.join(","));
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("| Controller | {} |\n", self.columns.join(" | "));
        out += &format!("|---|{}\n", "---:|".repeat(self.columns.len()));
        for (name, row) in self.rows.iter().zip(&self.cells) {
            let values: Vec<String> = row.iter().map(|&v| cell(v, 2)).collect();
            out += &format!("| {name} | {} |\n", values.join(" | "));
        }
        out
    }
}
