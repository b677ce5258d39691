namespace omc {}
