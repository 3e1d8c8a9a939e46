use super::ConicProgram;
use std::io::{self, Write};

/// Writes a plain-text dump of `program` for debugging with external tools.
///
/// Layout, one record per line:
///
/// ```text
/// conic-program vars <n> rows <m> offset <v>
/// block <name> <cone> <start> <len>
/// obj <col> <value>            (nonzeros only)
/// row <name> <rhs> <nnz> <col>:<value> ...
/// ```
///
/// Numbers are printed with 17 significant digits.
pub fn write_dump<W: Write>(program: &ConicProgram, mut out: W) -> io::Result<()> {
    writeln!(
        out,
        "conic-program vars {} rows {} offset {:.16e}",
        program.num_vars(),
        program.num_rows(),
        program.offset()
    )?;
    for block in program.blocks() {
        writeln!(out, "block {} {} {} {}", block.name, block.cone.tag(), block.start, block.len)?;
    }
    for (col, &v) in program.objective().iter().enumerate() {
        if v != 0.0 {
            writeln!(out, "obj {col} {v:.16e}")?;
        }
    }
    for r in 0..program.num_rows() {
        let entries: Vec<String> = program.row(r).map(|(c, v)| format!("{c}:{v:.16e}")).collect();
        writeln!(
            out,
            "row {} {:.16e} {} {}",
            program.row_name(r),
            program.rhs()[r],
            entries.len(),
            entries.join(" ")
        )?;
    }
    Ok(())
}
