namespace lamecgo {
// module under construction
}
