struct point {
    int x;
    int y;
};

static int dot(struct point a, struct point b) {
    return a.x * b.x + a.y * b.y; /* inner product */
}
