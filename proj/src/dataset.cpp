namespace fdmo {}
