fn main() {
    let (code, text) = expcli::cli::run_cli(std::env::args_os());
    if code == 0 {
        print!("{text}");
    } else {
        eprint!("{text}");
    }
    std::process::exit(code);
}
