use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};

fn main() {
    let n = 4usize;
    let mut trips: Vec<Triplet<usize, usize, f64>> = Vec::new();
    for i in 0..n {
        trips.push(Triplet::new(i, i, 4.0));
        if i + 1 < n {
            trips.push(Triplet::new(i, i + 1, -1.0));
            trips.push(Triplet::new(i + 1, i, -1.0));
        }
    }
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trips).unwrap();
    let lu = a.sp_lu().unwrap();
    let b = Mat::<f64>::from_fn(n, 1, |_, _| 1.0);
    let x = lu.solve(&b);
    println!("{:?}", (0..n).map(|i| x[(i, 0)]).collect::<Vec<_>>());
}
