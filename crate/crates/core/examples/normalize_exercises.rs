//! Three presentations of one exercise collapse to the same canonical text;
//! markup is stripped and listed synonyms map to their canonical term.

use fse::normalizer::{canonical_formula, Normalizer, TermTable};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let variants = [
        r"If  $\sqrt[3x-10]{2x+y-5}$ and $ \sqrt{x-3y+11}$  are homogeneous quadratic radicals,find the values of x and y.",
        r"If $\sqrt[3x-\text{-}10]{2x+y\text{-}5}$ and $\sqrt{x \text{-}3y+11}$ are homogeneous quadratic radicals, find the values of x and y.",
        r"If $\sqrt[3x\text{-}10]{2\mathrm{x}+\mathrm{y}  \text{-}5}$ and $\sqrt{\mathrm{x}\text{-}3 \mathrm{y}+11}$ are homogeneous quadratic radicals, find the values of x and y.",
    ];
    let n = Normalizer::new(TermTable::default());
    for v in variants {
        println!("{}", n.normalize(v)?.text());
    }

    println!("{}", canonical_formula(r"\frac{\mathrm{a}}{2}+\left(b\right)^{2}")?);

    let terms = TermTable::new([
        ("homogeneous quadratic radicals".to_string(), "like radicals".to_string()),
        ("radicals of the same kind".to_string(), "like radicals".to_string()),
    ])?;
    let n = Normalizer::new(terms);
    let html = r#"<p style="color:red">Are $\sqrt{2}$ and $\sqrt{8}$ <b>radicals of the same kind</b>?</p>"#;
    let canonical = n.normalize(html)?;
    println!("{}", canonical.text());
    for f in canonical.formulas() {
        println!("  formula {f}");
    }

    // Lenient mode keeps an unparseable formula verbatim instead of failing.
    let broken = r"Simplify $\frac{1}{$ first.";
    println!("strict: {:?}", n.normalize(broken).map(|t| t.text().to_string()).map_err(|e| e.to_string()));
    println!("lenient: {}", n.clone().lenient(true).normalize(broken)?.text());
    Ok(())
}
