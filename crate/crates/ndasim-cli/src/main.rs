fn main() {
    println!("ndasim");
}
