//! CSV rendering of training progress.

use std::io::Write;

use betree_core::trainer::IterationRecord;

pub const COLUMNS: &str = "iter,mean_loss,nodes,test_error,clamps,seconds";

/// Writes the run description as a `#` comment line followed by the column header.
pub fn write_header<W: Write>(w: &mut W, run_spec: &str) -> std::io::Result<()> {
    writeln!(w, "# {}", run_spec.replace('\n', " "))?;
    writeln!(w, "{COLUMNS}")
}

/// One row. A missing test error is an empty field.
pub fn format_record(r: &IterationRecord) -> String {
    let test = r.test_error.map_or_else(String::new, |e| e.to_string());
    format!("{},{},{},{},{},{}", r.iter, r.mean_loss, r.nodes, test, r.clamps, r.seconds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_layout() {
        let mut r = IterationRecord {
            iter: 3,
            mean_loss: 0.25,
            nodes: 7,
            test_error: None,
            clamps: 1,
            seconds: 0.0,
        };
        assert_eq!(format_record(&r), "3,0.25,7,,1,0");
        r.test_error = Some(0.125);
        assert_eq!(format_record(&r), "3,0.25,7,0.125,1,0");
        let mut buf = Vec::new();
        write_header(&mut buf, "train\nx").unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("# train x\n{COLUMNS}\n"));
    }
}
