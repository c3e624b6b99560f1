fn total(v: &[i64]) -> i64 {
    let mut acc = 0;
    for x in v {
        acc += x;
    }
    acc
}
