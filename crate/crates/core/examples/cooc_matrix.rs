//! Build the normalized co-occurrence matrix for a handful of sessions and
//! print its rows.
//!
//! cargo run --example cooc_matrix

use simrec::cooc::{accumulate, CoocMatrix};

fn main() -> simrec::Result<()> {
    let sessions: Vec<Vec<usize>> = vec![vec![1, 2, 3, 1], vec![2, 3, 4], vec![4, 5, 4, 5]];
    let n_items = 5;
    let t = 3;

    let raw = accumulate(sessions.iter().map(Vec::as_slice), n_items, t)?;
    println!("raw weighted counts (T = {t}):");
    for i in 1..=n_items {
        let row: Vec<u64> = (1..=n_items).map(|j| raw.get(i, j)).collect();
        println!("  {i}: {row:?}");
    }

    let a = CoocMatrix::build(sessions.iter().map(Vec::as_slice), n_items, t)?;
    println!("row-normalized, density {:.3}:", a.density);
    for i in 1..=n_items {
        let row: Vec<String> = a.matrix.row(i).map(|(j, v)| format!("{j}:{v:.3}")).collect();
        println!("  {i}: {}", row.join(" "));
    }

    let mut buf = Vec::new();
    a.write_to(&mut buf)?;
    let back = CoocMatrix::read_from(buf.as_slice(), "memory")?;
    println!("round trip through {} bytes, nnz {}", buf.len(), back.matrix.nnz());
    Ok(())
}
