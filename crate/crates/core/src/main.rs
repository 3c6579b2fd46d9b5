fn main() { std::process::exit(neutype::cli::run(std::env::args().collect())); }
