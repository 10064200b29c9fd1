//! Check the attribute-recovery identity on random attribute matrices, then
//! see how well co-occurrence alone recovers the attributes.
//!
//! cargo run --release --example theory_identity

use simrec::cooc::CoocMatrix;
use simrec::theory::{check_instance, cooc_recovery_correlations, sample_attribute_sequences, AttributeMatrix};

fn main() -> simrec::Result<()> {
    for (items, attrs) in [(8, 3), (32, 8), (64, 16)] {
        let r = AttributeMatrix::generate(items, attrs, 7)?;
        let c = check_instance(&r)?;
        println!(
            "|I|={items:2} |A|={attrs:2}: exact product {}, det {:+.0}, max residual {:.1e}",
            c.product_exact, c.determinant, c.max_residual
        );
    }

    let r = AttributeMatrix::generate(32, 6, 1)?;
    let seqs = sample_attribute_sequences(&r, 4000, 10, 1);
    let a = CoocMatrix::build(seqs.iter().map(Vec::as_slice), r.n_items(), 3)?;
    let corr = cooc_recovery_correlations(&r, &a)?;
    let shown: Vec<String> = corr.iter().map(|c| format!("{c:.2}")).collect();
    println!("correlation of recovered vs true attribute columns: {}", shown.join(" "));
    Ok(())
}
