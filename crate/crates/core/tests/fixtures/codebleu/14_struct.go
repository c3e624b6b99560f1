type Point struct {
	X, Y int
}

func (p Point) Dot(q Point) int {
	return p.X*q.X + p.Y*q.Y
}
