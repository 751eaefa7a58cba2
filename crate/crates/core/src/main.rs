fn main() {
    std::process::exit(kuznetsov::cli::main_entry());
}
