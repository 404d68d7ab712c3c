//! Plain-text array format: each array is four lines of `+`/`-` (segments in
//! order), consecutive arrays separated by one blank line.

use super::GsArray;
use crate::error::{Error, Result};

pub fn format_arrays(arrays: &[GsArray]) -> String {
    let mut out = String::new();
    for (idx, a) in arrays.iter().enumerate() {
        if idx > 0 {
            out.push('\n');
        }
        for seg in a.segments() {
            out.extend(seg.iter().map(|&x| if x > 0 { '+' } else { '-' }));
            out.push('\n');
        }
    }
    out
}

pub fn parse_arrays(text: &str) -> Result<Vec<GsArray>> {
    let mut arrays = Vec::new();
    let mut group: Vec<(usize, Vec<i8>)> = Vec::new();
    let flush = |group: &mut Vec<(usize, Vec<i8>)>, arrays: &mut Vec<GsArray>| -> Result<()> {
        if group.is_empty() {
            return Ok(());
        }
        let first_line = group[0].0;
        if group.len() != 4 {
            return Err(Error::Parse {
                line: first_line,
                msg: format!("expected 4 segment lines, found {}", group.len()),
            });
        }
        let len = group[0].1.len();
        if let Some((line, seg)) = group.iter().find(|(_, s)| s.len() != len) {
            return Err(Error::Parse {
                line: *line,
                msg: format!("segment has {} entries, expected {}", seg.len(), len),
            });
        }
        let data: Vec<i8> = group.drain(..).flat_map(|(_, s)| s).collect();
        arrays.push(GsArray::from_flat(4 * len, data)?);
        Ok(())
    };
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut group, &mut arrays)?;
            continue;
        }
        let seg = line
            .chars()
            .enumerate()
            .map(|(col, ch)| match ch {
                '+' => Ok(1),
                '-' => Ok(-1),
                other => Err(Error::Parse {
                    line: line_no,
                    msg: format!("unexpected character {other:?} at column {}", col + 1),
                }),
            })
            .collect::<Result<Vec<i8>>>()?;
        group.push((line_no, seg));
    }
    flush(&mut group, &mut arrays)?;
    Ok(arrays)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    #[test]
    fn exact_layout() {
        let a = GsArray::new([vec![1, -1], vec![1, 1], vec![-1, -1], vec![-1, 1]]).unwrap();
        let b = GsArray::ones(8).unwrap();
        assert_eq!(format_arrays(&[a, b]), "+-\n++\n--\n-+\n\n++\n++\n++\n++\n");
        assert_eq!(format_arrays(&[]), "");
    }

    #[test]
    fn malformed_input_reports_line_numbers() {
        let err = parse_arrays("++\n++\n+x\n++\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_arrays("++\n++\n++\n\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        let err = parse_arrays("++\n++\n+++\n++\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(parse_arrays("").unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn text_round_trip(seed in any::<u64>(), np in 1usize..20, count in 0usize..5) {
            let mut rng = stream(seed, &[]);
            let arrays: Vec<GsArray> = (0..count).map(|_| GsArray::random(4 * np, &mut rng).unwrap()).collect();
            prop_assert_eq!(parse_arrays(&format_arrays(&arrays)).unwrap(), arrays);
        }
    }
}
