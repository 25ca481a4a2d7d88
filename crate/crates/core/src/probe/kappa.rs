use serde::Serialize;

use crate::data::{Label, Task};
use crate::error::{Error, Result};

/// Cohen's kappa between two raters plus the tables behind it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport {
    pub kappa: f64,
    pub observed: f64,
    pub expected: f64,
    pub n: usize,
    /// Labels indexing `confusion`, in canonical order.
    pub labels: Vec<Label>,
    /// `confusion[a][b]`: items rater A labelled `a` and rater B labelled `b`.
    pub confusion: Vec<Vec<usize>>,
    /// Both raters used one identical constant label, so chance agreement
    /// is 1 and kappa is fixed by convention.
    pub degenerate: bool,
}

/// `kappa = (p_o - p_e) / (1 - p_e)` with `p_e` from the product of the
/// raters' marginals.
pub fn cohen_kappa(pairs: &[(Label, Label)]) -> Result<AgreementReport> {
    let (first, _) = *pairs.first().ok_or(Error::Empty("agreement pair list"))?;
    let task: Task = first.task();
    if let Some(l) = pairs
        .iter()
        .flat_map(|(a, b)| [*a, *b])
        .find(|l| l.task() != task)
    {
        return Err(Error::InvalidLabel {
            label: l.to_string(),
            task,
        });
    }

    let k = task.arity();
    let mut confusion = vec![vec![0usize; k]; k];
    for (a, b) in pairs {
        confusion[a.index()][b.index()] += 1;
    }
    let n = pairs.len();
    let agree: usize = (0..k).map(|i| confusion[i][i]).sum();
    let row: Vec<usize> = confusion.iter().map(|r| r.iter().sum()).collect();
    let col: Vec<usize> = (0..k).map(|j| confusion.iter().map(|r| r[j]).sum()).collect();
    // Integer numerator of p_e * n^2 so the degenerate case is detected exactly.
    let chance: u128 = row.iter().zip(&col).map(|(&r, &c)| r as u128 * c as u128).sum();
    let n2 = (n as u128) * (n as u128);

    let observed = agree as f64 / n as f64;
    let expected = chance as f64 / n2 as f64;
    let degenerate = chance == n2;
    let kappa = if degenerate {
        if agree == n {
            1.0
        } else {
            0.0
        }
    } else {
        (observed - expected) / (1.0 - expected)
    };

    Ok(AgreementReport {
        kappa,
        observed,
        expected,
        n,
        labels: task.labels().to_vec(),
        confusion,
        degenerate,
    })
}
