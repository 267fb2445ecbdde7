fn main() {
    std::process::exit(sqz::cli::main_entry(std::env::args_os()));
}
